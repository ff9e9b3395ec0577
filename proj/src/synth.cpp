#include "dpvis/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dpvis/error.hpp"

namespace dpvis {

namespace {

template <typename Rng>
int draw_state(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& probs) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    const int K = static_cast<int>(probs.size());
    for (int k = 0; k < K; ++k) {
        r -= probs(k);
        if (r < 0.0) return k;
    }
    for (int k = K - 1; k >= 0; --k)
        if (probs(k) > 0.0) return k;
    return K - 1;
}

}  // namespace

HmmModel reference_model(int n_states, double time_unit) {
    if (n_states < 1) throw Error(Errc::InvalidConfig, "n_states must be at least 1");
    const int K = n_states;
    const int V = std::max(3, K - 1);
    HmmModel m;
    m.config.n_states = K;
    m.config.time_unit = time_unit;
    m.config.mask = forward_mask(K);
    m.pi.resize(K);
    for (int k = 0; k < K; ++k) m.pi(k) = std::ldexp(1.0, -k);
    m.pi /= m.pi.sum();
    m.trans = Eigen::MatrixXd::Zero(K, K);
    for (int k = 0; k + 1 < K; ++k) {
        m.trans(k, k) = 0.85;
        m.trans(k, k + 1) = 0.15;
    }
    m.trans(K - 1, K - 1) = 1.0;
    for (int v = 0; v < V; ++v) {
        EmissionParams e;
        e.variable = "m" + std::to_string(v + 1);
        e.kind = EmissionKind::Bernoulli;
        e.mean.resize(K);
        for (int k = 0; k < K; ++k) e.mean(k) = v < k ? 0.9 : 0.1;
        m.config.emissions[e.variable] = EmissionKind::Bernoulli;
        m.emissions.push_back(std::move(e));
    }
    // emissions ordered by name to match trained models
    std::sort(m.emissions.begin(), m.emissions.end(),
              [](const EmissionParams& a, const EmissionParams& b) { return a.variable < b.variable; });
    return m;
}

Dataset sample_dataset(const HmmModel& model, const SynthOptions& opts) {
    if (opts.n_subjects < 1 || opts.visits_per_subject < 1)
        throw Error(Errc::InvalidConfig, "synthetic data needs at least one subject and one visit");
    if (!(opts.missing_rate >= 0.0 && opts.missing_rate < 1.0))
        throw Error(Errc::InvalidConfig, "missing_rate must lie in [0, 1)");

    Dataset ds;
    for (const auto& e : model.emissions) {
        ds.schema.push_back(Variable{e.variable,
                                     e.kind == EmissionKind::Bernoulli ? VarKind::Binary : VarKind::Continuous,
                                     VarRole::DynamicObserved});
    }
    ds.schema.push_back(Variable{"SEX", VarKind::Categorical, VarRole::Static});
    ds.schema.push_back(Variable{"onset", VarKind::Continuous, VarRole::OutcomeEvent});
    ds.schema.push_back(Variable{"seroconversion", VarKind::Continuous, VarRole::OutcomeEvent});

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> start(0, std::max(0, opts.max_start_step));
    const int K = model.n_states();
    const int width = static_cast<int>(std::to_string(opts.n_subjects).size());
    const double unit = model.config.time_unit;

    for (int i = 0; i < opts.n_subjects; ++i) {
        Subject s;
        std::string num = std::to_string(i + 1);
        s.id = "S" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        const int first = start(rng);
        int state = draw_state(rng, model.pi);
        for (int j = 0; j < opts.visits_per_subject; ++j) {
            if (j > 0) state = draw_state(rng, model.trans.row(state).transpose());
            Visit v;
            v.age = round_age(static_cast<double>(first + j) * unit);
            bool positive = false;
            for (const auto& e : model.emissions) {
                double x = 0.0;
                if (e.kind == EmissionKind::Bernoulli) {
                    x = u(rng) < e.mean(state) ? 1.0 : 0.0;
                } else {
                    std::normal_distribution<double> n(e.mean(state), std::sqrt(e.variance(state)));
                    x = n(rng);
                }
                if (u(rng) < opts.missing_rate) {
                    v.values[e.variable] = std::nullopt;
                } else {
                    v.values[e.variable] = x;
                    positive = positive || (e.kind == EmissionKind::Bernoulli && x == 1.0);
                }
            }
            if (positive && !s.events.count("seroconversion")) s.events["seroconversion"] = v.age;
            if (K > 1 && state == K - 1 && !s.events.count("onset")) s.events["onset"] = v.age;
            s.visits.push_back(std::move(v));
        }
        s.statics["SEX"] = u(rng) < 0.5 ? std::string("F") : std::string("M");
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

}  // namespace dpvis
