#include "dpvis/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include "dpvis/error.hpp"
#include "dpvis/inference.hpp"

namespace dpvis {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct VariableStats {
    double mean = 0.0;
    double variance = 0.0;
    std::vector<double> values;  // observed cells, dataset order
};

struct Sufficient {
    Eigen::VectorXd pi;
    Eigen::MatrixXd trans;
    // per variable: weight, weighted sum, weighted sum of squares (centered)
    std::vector<Eigen::VectorXd> w, s1, s2;
    double loglik = 0.0;
};

double bernoulli_log(double x, double logp, double log1mp) {
    if (x == 1.0) return logp;
    if (x == 0.0) return log1mp;
    return x * logp + (1.0 - x) * log1mp;
}

std::mt19937_64 restart_rng(std::uint64_t seed, int restart) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(restart)};
    return std::mt19937_64(seq);
}

template <typename Rng>
double gamma_draw(Rng& rng, double shape) {
    std::gamma_distribution<double> g(shape, 1.0);
    return g(rng);
}

class Trainer {
public:
    Trainer(const Dataset& ds, const HmmConfig& cfg) : cfg_(cfg), mask_(cfg.effective_mask()) {
        for (const auto& [name, kind] : cfg.emissions) names_.push_back(name);
        for (const auto& s : ds.subjects) seqs_.push_back(discretize(s, cfg.time_unit, names_));
        stats_.resize(names_.size());
        for (std::size_t v = 0; v < names_.size(); ++v) {
            auto& st = stats_[v];
            for (const auto& s : ds.subjects)
                for (const auto& visit : s.visits) {
                    auto it = visit.values.find(names_[v]);
                    if (it != visit.values.end() && it->second) st.values.push_back(*it->second);
                }
            if (!st.values.empty()) {
                double sum = 0.0;
                for (double x : st.values) sum += x;
                st.mean = sum / static_cast<double>(st.values.size());
                double ss = 0.0;
                for (double x : st.values) ss += (x - st.mean) * (x - st.mean);
                st.variance = ss / static_cast<double>(st.values.size());
            }
            floors_.push_back(st.variance > 0.0 ? cfg.variance_floor * st.variance : cfg.variance_floor);
            if (cfg.emissions.at(names_[v]) == EmissionKind::Gaussian && st.variance == 0.0) {
                std::clog << "warning: DegenerateData: variable " << names_[v]
                          << " has zero variance; Gaussian variance floored at " << floors_.back() << "\n";
            }
        }
    }

    HmmModel fit(int restart) const {
        auto rng = restart_rng(cfg_.seed, restart);
        HmmModel m = initialize(rng);
        double prev = kNegInf;
        for (int it = 0;; ++it) {
            Sufficient suff = e_step(m);
            m.loglik_trace.push_back(suff.loglik);
            m.train_loglik = suff.loglik;
            if (it > 0) {
                const double gain = (suff.loglik - prev) / std::max(std::abs(prev), 1e-300);
                if (gain < cfg_.rel_tol) break;
            }
            if (it >= cfg_.max_iters) break;
            prev = suff.loglik;
            m_step(m, suff);
        }
        return m;
    }

private:
    template <typename Rng>
    HmmModel initialize(Rng& rng) const {
        const int K = cfg_.n_states;
        HmmModel m;
        m.config = cfg_;
        m.pi.resize(K);
        for (int k = 0; k < K; ++k) m.pi(k) = gamma_draw(rng, 1.0);
        m.pi /= m.pi.sum();

        m.trans = Eigen::MatrixXd::Zero(K, K);
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j)
                if (mask_(i, j)) m.trans(i, j) = gamma_draw(rng, i == j ? 5.0 : 1.0);
            m.trans.row(i) /= m.trans.row(i).sum();
        }

        std::uniform_real_distribution<double> unit(0.2, 0.8);
        for (std::size_t v = 0; v < names_.size(); ++v) {
            EmissionParams e;
            e.variable = names_[v];
            e.kind = cfg_.emissions.at(names_[v]);
            e.mean.resize(K);
            if (e.kind == EmissionKind::Bernoulli) {
                for (int k = 0; k < K; ++k) e.mean(k) = unit(rng);
            } else {
                const auto& vals = stats_[v].values;
                if (vals.empty()) {
                    e.mean.setZero();
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, vals.size() - 1);
                    for (int k = 0; k < K; ++k) e.mean(k) = vals[pick(rng)];
                }
                e.variance = Eigen::VectorXd::Constant(K, std::max(stats_[v].variance, floors_[v]));
            }
            m.emissions.push_back(std::move(e));
        }
        return m;
    }

    Sufficient e_step(const HmmModel& m) const {
        const int K = cfg_.n_states;
        const std::size_t V = names_.size();
        Sufficient s;
        s.pi = Eigen::VectorXd::Zero(K);
        s.trans = Eigen::MatrixXd::Zero(K, K);
        s.w.assign(V, Eigen::VectorXd::Zero(K));
        s.s1.assign(V, Eigen::VectorXd::Zero(K));
        s.s2.assign(V, Eigen::VectorXd::Zero(K));
        for (const auto& seq : seqs_) {
            const Eigen::MatrixXd logb = emission_loglik(m, seq);
            auto fb = forward_backward<double>(m.pi, m.trans, logb);
            if (!std::isfinite(fb.loglik)) {
                throw Error(Errc::NoFeasiblePath, "observations of subject " + seq.subject_id +
                                                      " are impossible under the current parameters");
            }
            s.loglik += fb.loglik;
            s.pi += fb.posteriors.row(0).transpose();
            s.trans += fb.expected_transitions;
            for (Eigen::Index t = 0; t < seq.steps(); ++t) {
                for (std::size_t v = 0; v < V; ++v) {
                    if (!seq.observed(t, static_cast<Eigen::Index>(v))) continue;
                    const double x = seq.values(t, static_cast<Eigen::Index>(v));
                    const auto g = fb.posteriors.row(t).transpose();
                    if (m.emissions[v].kind == EmissionKind::Bernoulli) {
                        s.w[v] += g;
                        s.s1[v] += g * x;
                    } else {
                        const double c = x - stats_[v].mean;
                        s.w[v] += g;
                        s.s1[v] += g * c;
                        s.s2[v] += g * (c * c);
                    }
                }
            }
        }
        return s;
    }

    void m_step(HmmModel& m, const Sufficient& s) const {
        const int K = cfg_.n_states;
        if (s.pi.sum() > 0.0) m.pi = s.pi / s.pi.sum();
        for (int i = 0; i < K; ++i) {
            Eigen::RowVectorXd row = s.trans.row(i);
            for (int j = 0; j < K; ++j)
                if (!mask_(i, j)) row(j) = 0.0;
            const double total = row.sum();
            if (total > 0.0) m.trans.row(i) = row / total;
        }
        for (std::size_t v = 0; v < names_.size(); ++v) {
            auto& e = m.emissions[v];
            for (int k = 0; k < K; ++k) {
                const double w = s.w[v](k);
                if (!(w > 0.0)) continue;
                if (e.kind == EmissionKind::Bernoulli) {
                    e.mean(k) = std::clamp(s.s1[v](k) / w, cfg_.prob_floor, 1.0 - cfg_.prob_floor);
                } else {
                    const double centered = s.s1[v](k) / w;
                    const double var = s.s2[v](k) / w - centered * centered;
                    e.mean(k) = stats_[v].mean + centered;
                    e.variance(k) = std::max(var, floors_[v]);
                }
            }
        }
    }

    const HmmConfig& cfg_;
    TransitionMask mask_;
    std::vector<std::string> names_;
    std::vector<GridSequence> seqs_;
    std::vector<VariableStats> stats_;
    std::vector<double> floors_;
};

}  // namespace

TransitionMask full_mask(int n_states) {
    return TransitionMask::Constant(n_states, n_states, true);
}

TransitionMask forward_mask(int n_states) {
    TransitionMask m = TransitionMask::Constant(n_states, n_states, false);
    for (int i = 0; i < n_states; ++i) {
        m(i, i) = true;
        if (i + 1 < n_states) m(i, i + 1) = true;
    }
    return m;
}

TransitionMask HmmConfig::effective_mask() const {
    return mask.size() == 0 ? full_mask(n_states) : mask;
}

void validate(const HmmConfig& cfg) {
    if (cfg.n_states < 1) throw Error(Errc::InvalidConfig, "n_states must be at least 1");
    if (!(cfg.time_unit > 0.0)) throw Error(Errc::InvalidConfig, "time_unit must be positive");
    if (cfg.emissions.empty()) throw Error(Errc::InvalidConfig, "at least one emission variable is required");
    if (cfg.restarts < 1) throw Error(Errc::InvalidConfig, "restarts must be at least 1");
    if (cfg.max_iters < 0) throw Error(Errc::InvalidConfig, "max_iters must be non-negative");
    if (!(cfg.rel_tol >= 0.0)) throw Error(Errc::InvalidConfig, "rel_tol must be non-negative");
    if (!(cfg.variance_floor > 0.0)) throw Error(Errc::InvalidConfig, "variance_floor must be positive");
    if (!(cfg.prob_floor >= 0.0 && cfg.prob_floor < 0.5)) throw Error(Errc::InvalidConfig, "prob_floor must lie in [0, 0.5)");
    if (cfg.mask.size() != 0) {
        if (cfg.mask.rows() != cfg.n_states || cfg.mask.cols() != cfg.n_states)
            throw Error(Errc::InvalidConfig, "transition mask must be n_states x n_states");
        // A full diagonal keeps every observation sequence feasible.
        for (int i = 0; i < cfg.n_states; ++i)
            if (!cfg.mask(i, i)) throw Error(Errc::InvalidConfig, "transition mask diagonal must be all ones");
    }
}

std::vector<std::string> HmmModel::variables() const {
    std::vector<std::string> out;
    for (const auto& e : emissions) out.push_back(e.variable);
    return out;
}

long grid_step(double age, double time_unit) noexcept {
    return static_cast<long>(std::floor(age / time_unit + 0.5));
}

GridSequence discretize(const Subject& subject, double time_unit, std::span<const std::string> variables) {
    GridSequence g;
    g.subject_id = subject.id;
    const auto V = static_cast<Eigen::Index>(variables.size());
    if (subject.visits.empty()) {
        g.values.resize(0, V);
        g.observed.resize(0, V);
        return g;
    }
    g.first_step = grid_step(subject.visits.front().age, time_unit);
    const long last = grid_step(subject.visits.back().age, time_unit);
    const Eigen::Index T = last - g.first_step + 1;
    g.values = Eigen::MatrixXd::Zero(T, V);
    g.observed = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, V, false);
    for (const auto& visit : subject.visits) {
        const Eigen::Index t = grid_step(visit.age, time_unit) - g.first_step;
        g.visit_steps.push_back(t);
        // Later visits overwrite earlier ones field by field.
        for (Eigen::Index v = 0; v < V; ++v) {
            auto it = visit.values.find(variables[static_cast<std::size_t>(v)]);
            if (it == visit.values.end() || !it->second) continue;
            g.values(t, v) = *it->second;
            g.observed(t, v) = true;
        }
    }
    return g;
}

Eigen::MatrixXd emission_loglik(const HmmModel& model, const GridSequence& seq) {
    const int K = model.n_states();
    const Eigen::Index T = seq.steps();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, K);
    const auto V = static_cast<Eigen::Index>(model.emissions.size());
    for (Eigen::Index v = 0; v < V; ++v) {
        const auto& e = model.emissions[static_cast<std::size_t>(v)];
        if (e.kind == EmissionKind::Bernoulli) {
            const Eigen::ArrayXd logp = e.mean.array().log();
            const Eigen::ArrayXd log1mp = (1.0 - e.mean.array()).log();
            for (Eigen::Index t = 0; t < T; ++t) {
                if (!seq.observed(t, v)) continue;
                const double x = seq.values(t, v);
                for (int k = 0; k < K; ++k) out(t, k) += bernoulli_log(x, logp(k), log1mp(k));
            }
        } else {
            const Eigen::ArrayXd norm = -0.5 * (2.0 * std::numbers::pi * e.variance.array()).log();
            for (Eigen::Index t = 0; t < T; ++t) {
                if (!seq.observed(t, v)) continue;
                const double x = seq.values(t, v);
                for (int k = 0; k < K; ++k) {
                    const double d = x - e.mean(k);
                    out(t, k) += norm(k) - d * d / (2.0 * e.variance(k));
                }
            }
        }
    }
    return out;
}

HmmModel train(const Dataset& ds, const HmmConfig& cfg) {
    validate(cfg);
    if (ds.subjects.empty()) throw Error(Errc::EmptyInput, "training needs at least one subject");
    for (const auto& [name, kind] : cfg.emissions) {
        const Variable* var = ds.find_variable(name);
        if (!var || var->role != VarRole::DynamicObserved)
            throw Error(Errc::UnknownVariable, "emission variable " + name + " is not a dynamic-observed variable");
    }
    const Trainer trainer(ds, cfg);

    std::vector<HmmModel> fits(static_cast<std::size_t>(cfg.restarts));
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    if (workers > 1 && cfg.restarts > 1) {
        std::vector<std::future<HmmModel>> jobs;
        for (int r = 0; r < cfg.restarts; ++r)
            jobs.push_back(std::async(std::launch::async, [&trainer, r] { return trainer.fit(r); }));
        for (int r = 0; r < cfg.restarts; ++r) fits[static_cast<std::size_t>(r)] = jobs[static_cast<std::size_t>(r)].get();
    } else {
        for (int r = 0; r < cfg.restarts; ++r) fits[static_cast<std::size_t>(r)] = trainer.fit(r);
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < fits.size(); ++r)
        if (fits[r].train_loglik > fits[best].train_loglik) best = r;
    return std::move(fits[best]);
}

double loglikelihood(const HmmModel& model, const Subject& subject) {
    const auto vars = model.variables();
    const GridSequence seq = discretize(subject, model.config.time_unit, vars);
    return forward_loglik<double>(model.pi, model.trans, emission_loglik(model, seq));
}

std::vector<int> DecodedSubject::labels() const {
    std::vector<int> out;
    out.reserve(visits.size());
    for (const auto& v : visits) out.push_back(v.state);
    return out;
}

DecodedSubject decode_subject(const HmmModel& model, const Subject& subject) {
    const auto vars = model.variables();
    const GridSequence seq = discretize(subject, model.config.time_unit, vars);
    const Eigen::MatrixXd logb = emission_loglik(model, seq);
    auto fb = forward_backward<double>(model.pi, model.trans, logb, false);
    const std::vector<int> path = viterbi<double>(model.pi, model.trans, logb);
    if (!std::isfinite(fb.loglik) || path.empty())
        throw Error(Errc::NoFeasiblePath, "subject " + subject.id + " has no feasible state path");

    DecodedSubject out;
    out.subject_id = subject.id;
    out.loglik = fb.loglik;
    for (std::size_t i = 0; i < subject.visits.size(); ++i) {
        const Eigen::Index t = seq.visit_steps[i];
        out.visits.push_back(DecodedVisit{subject.visits[i].age, path[static_cast<std::size_t>(t)],
                                          fb.posteriors.row(t).transpose()});
    }
    return out;
}

std::vector<DecodedSubject> decode(const HmmModel& model, const Dataset& ds) {
    std::vector<DecodedSubject> out;
    out.reserve(ds.subjects.size());
    for (const auto& s : ds.subjects) out.push_back(decode_subject(model, s));
    return out;
}

std::vector<int> assign_folds(std::size_t n_subjects, int folds, std::uint64_t seed) {
    std::vector<std::size_t> perm(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n_subjects; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    std::vector<int> fold(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
}

std::vector<CvRow> cross_validate(const Dataset& ds, std::span<const HmmConfig> cfgs, int folds,
                                  std::uint64_t seed) {
    if (folds < 2) throw Error(Errc::InvalidConfig, "cross-validation needs at least 2 folds");
    if (ds.subjects.size() < static_cast<std::size_t>(folds))
        throw Error(Errc::FoldTooSmall, "fewer subjects than folds leaves an empty fold");
    const auto fold = assign_folds(ds.subjects.size(), folds, seed);

    std::vector<Dataset> train_sets(static_cast<std::size_t>(folds));
    std::vector<std::vector<const Subject*>> held_out(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        auto& tr = train_sets[static_cast<std::size_t>(f)];
        tr.schema = ds.schema;
        for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
            if (fold[i] == f) held_out[static_cast<std::size_t>(f)].push_back(&ds.subjects[i]);
            else tr.subjects.push_back(ds.subjects[i]);
        }
    }

    std::vector<CvRow> rows;
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
        CvRow row;
        row.config_index = c;
        row.n_states = cfgs[c].n_states;
        for (int f = 0; f < folds; ++f) {
            const HmmModel model = train(train_sets[static_cast<std::size_t>(f)], cfgs[c]);
            double ll = 0.0;
            for (const Subject* s : held_out[static_cast<std::size_t>(f)]) {
                ll += loglikelihood(model, *s);
                row.heldout_visits += s->visits.size();
            }
            row.fold_loglik.push_back(ll);
            row.heldout_loglik += ll;
        }
        row.loglik_per_visit = row.heldout_visits ? row.heldout_loglik / static_cast<double>(row.heldout_visits) : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::map<std::string, EmissionKind> default_emissions(const Dataset& ds) {
    std::map<std::string, EmissionKind> out;
    for (const auto& v : ds.schema)
        if (v.role == VarRole::DynamicObserved)
            out[v.name] = v.kind == VarKind::Binary ? EmissionKind::Bernoulli : EmissionKind::Gaussian;
    return out;
}

}  // namespace dpvis
