#include "doctest.h"

#include <cmath>
#include <random>

#include "dpvis/error.hpp"
#include "dpvis/hmm.hpp"
#include "dpvis/inference.hpp"
#include "dpvis/synth.hpp"
#include "oracles.hpp"

using namespace dpvis;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

HmmModel bernoulli_model(const Eigen::VectorXd& pi, const Eigen::MatrixXd& trans,
                         const std::vector<std::vector<double>>& p) {
    HmmModel m;
    m.config.n_states = static_cast<int>(pi.size());
    m.pi = pi;
    m.trans = trans;
    for (std::size_t v = 0; v < p.size(); ++v) {
        EmissionParams e;
        e.variable = "v" + std::to_string(v + 1);
        e.kind = EmissionKind::Bernoulli;
        e.mean = Eigen::Map<const Eigen::VectorXd>(p[v].data(), static_cast<Eigen::Index>(p[v].size()));
        m.config.emissions[e.variable] = EmissionKind::Bernoulli;
        m.emissions.push_back(e);
    }
    return m;
}

Subject subject_from_grid(const oracle::Grid& obs, double start = 0.0) {
    Subject s;
    s.id = "S";
    for (std::size_t t = 0; t < obs.size(); ++t) {
        Visit v;
        v.age = start + static_cast<double>(t);
        for (std::size_t j = 0; j < obs[t].size(); ++j) {
            const std::string name = "v" + std::to_string(j + 1);
            v.values[name] = std::isnan(obs[t][j]) ? Cell{} : Cell{obs[t][j]};
        }
        s.visits.push_back(v);
    }
    return s;
}

HmmModel textbook() {
    Eigen::Vector2d pi(0.5, 0.5);
    Eigen::Matrix2d a;
    a << 0.7, 0.3, 0.4, 0.6;
    return bernoulli_model(pi, a, {{0.9, 0.2}});
}

template <typename Rng>
HmmModel random_model(Rng& rng, int K, int V, bool gaussian_last) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Eigen::VectorXd pi(K);
    for (int k = 0; k < K; ++k) pi(k) = u(rng);
    pi /= pi.sum();
    Eigen::MatrixXd a(K, K);
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) a(i, j) = u(rng);
        a.row(i) /= a.row(i).sum();
    }
    std::vector<std::vector<double>> p(static_cast<std::size_t>(V), std::vector<double>(static_cast<std::size_t>(K)));
    for (auto& row : p)
        for (double& x : row) x = u(rng);
    HmmModel m = bernoulli_model(pi, a, p);
    if (gaussian_last) {
        auto& e = m.emissions.back();
        e.kind = EmissionKind::Gaussian;
        e.variance.resize(K);
        for (int k = 0; k < K; ++k) {
            e.mean(k) = 4.0 * u(rng) - 2.0;
            e.variance(k) = 0.2 + u(rng);
        }
        m.config.emissions[e.variable] = EmissionKind::Gaussian;
    }
    return m;
}

}  // namespace

TEST_CASE("discretize places visits on the grid") {
    Subject s;
    s.id = "A";
    s.visits = {Visit{0.0, {{"x", 1.0}}}, Visit{2.0, {{"x", 0.0}}}};
    const std::vector<std::string> vars{"x"};
    auto g = discretize(s, 1.0, vars);
    REQUIRE(g.steps() == 3);
    CHECK(g.observed(0, 0));
    CHECK_FALSE(g.observed(1, 0));
    CHECK(g.observed(2, 0));

    Subject one{"B", {Visit{7.3, {{"x", 1.0}}}}, {}, {}};
    auto g1 = discretize(one, 1.0, vars);
    CHECK(g1.steps() == 1);
    CHECK(g1.first_step == 7);

    Subject close{"C", {Visit{11.6, {{"x", 1.0}}}, Visit{12.4, {{"x", Cell{}}}}}, {}, {}};
    auto g2 = discretize(close, 1.0, vars);
    CHECK(g2.steps() == 1);
    CHECK(g2.first_step == 12);
    CHECK(g2.visit_steps == std::vector<Eigen::Index>{0, 0});
    CHECK(g2.values(0, 0) == 1.0);  // the later visit is missing, so the earlier value stays
}

TEST_CASE("log-likelihood worked examples") {
    SUBCASE("certain chain") {
        Eigen::Vector2d pi(1.0, 0.0);
        HmmModel m = bernoulli_model(pi, Eigen::Matrix2d::Identity(), {{1.0, 0.0}});
        CHECK(loglikelihood(m, subject_from_grid({{1.0}, {1.0}, {1.0}})) == 0.0);
    }
    SUBCASE("two-state textbook model") {
        const HmmModel m = textbook();
        const auto s = subject_from_grid({{1.0}, {0.0}});
        const auto brute = oracle::enumerate_paths(m, {{1.0}, {0.0}});
        CHECK(brute.likelihood == doctest::Approx(0.1915).epsilon(1e-12));
        CHECK(std::exp(loglikelihood(m, s)) == doctest::Approx(0.1915).epsilon(1e-12));
    }
    SUBCASE("missing second observation drops its factor") {
        const HmmModel m = textbook();
        const auto brute = oracle::enumerate_paths(m, {{1.0}, {kNaN}});
        CHECK(brute.likelihood == doctest::Approx(0.55).epsilon(1e-12));
        CHECK(std::exp(loglikelihood(m, subject_from_grid({{1.0}, {kNaN}}))) == doctest::Approx(0.55).epsilon(1e-12));
    }
}

TEST_CASE("decode worked examples") {
    Dataset ds;
    ds.schema = {{"v1", VarKind::Binary, VarRole::DynamicObserved}};
    ds.subjects.push_back(subject_from_grid({{1.0}, {0.0}}));
    auto d = decode(textbook(), ds);
    REQUIRE(d.size() == 1);
    CHECK(d[0].labels() == std::vector<int>{0, 1});

    Eigen::Vector2d pi(1.0, 0.0);
    HmmModel det = bernoulli_model(pi, Eigen::Matrix2d::Identity(), {{0.6, 0.3}});
    ds.subjects[0] = subject_from_grid({{1.0}, {0.0}, {kNaN}, {1.0}});
    auto d2 = decode(det, ds);
    for (const auto& v : d2[0].visits) {
        CHECK(v.state == 0);
        CHECK(v.posterior(0) == 1.0);
        CHECK(v.posterior(1) == 0.0);
    }
}

TEST_CASE("forward-backward and Viterbi agree with path enumeration") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> kdist(1, 3), tdist(1, 6), vdist(1, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = kdist(rng), T = tdist(rng), V = vdist(rng);
        const bool gaussian = rep % 3 == 0;
        HmmModel m = random_model(rng, K, V, gaussian);
        oracle::Grid obs(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(V)));
        for (auto& row : obs)
            for (std::size_t v = 0; v < row.size(); ++v) {
                const bool gauss = gaussian && v + 1 == row.size();
                row[v] = u(rng) < 0.25 ? kNaN : gauss ? 3.0 * u(rng) - 1.5 : (u(rng) < 0.5 ? 1.0 : 0.0);
            }
        const auto brute = oracle::enumerate_paths(m, obs);
        const Subject s = subject_from_grid(obs);
        const auto seq = discretize(s, 1.0, m.variables());
        const Eigen::MatrixXd logb = emission_loglik(m, seq);
        const auto fb = forward_backward<double>(m.pi, m.trans, logb);
        CHECK(fb.loglik == doctest::Approx(std::log(brute.likelihood)).epsilon(1e-9));
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k)
                CHECK(std::abs(fb.posteriors(t, k) - brute.posteriors[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]) < 1e-9);
        CHECK(viterbi<double>(m.pi, m.trans, logb) == brute.best_path);
    }
}

TEST_CASE("posteriors sum to one and K = 1 collapses to the MLE") {
    SynthOptions opts;
    opts.n_subjects = 20;
    opts.visits_per_subject = 6;
    opts.seed = 5;
    const Dataset ds = sample_dataset(reference_model(3), opts);

    HmmConfig cfg;
    cfg.n_states = 1;
    cfg.emissions = default_emissions(ds);
    cfg.restarts = 2;
    const HmmModel m = train(ds, cfg);
    CHECK(m.pi(0) == 1.0);
    CHECK(m.trans(0, 0) == 1.0);
    for (const auto& e : m.emissions) {
        double sum = 0.0, n = 0.0;
        for (const auto& s : ds.subjects)
            for (const auto& v : s.visits)
                if (auto c = v.values.at(e.variable)) {
                    sum += *c;
                    n += 1.0;
                }
        CHECK(e.mean(0) == doctest::Approx(sum / n).epsilon(1e-12));
    }

    cfg.n_states = 3;
    const HmmModel m3 = train(ds, cfg);
    for (const auto& d : decode(m3, ds))
        for (const auto& v : d.visits) CHECK(std::abs(v.posterior.sum() - 1.0) < 1e-9);
}

TEST_CASE("training is deterministic, monotone and respects the mask") {
    SynthOptions opts;
    opts.n_subjects = 40;
    opts.visits_per_subject = 10;
    opts.seed = 11;
    const Dataset ds = sample_dataset(reference_model(3), opts);
    HmmConfig cfg;
    cfg.n_states = 3;
    cfg.emissions = default_emissions(ds);
    cfg.mask = forward_mask(3);
    cfg.restarts = 3;
    cfg.seed = 9;
    const HmmModel a = train(ds, cfg);
    const HmmModel b = train(ds, cfg);
    CHECK(a.pi == b.pi);
    CHECK(a.trans == b.trans);
    CHECK(a.train_loglik == b.train_loglik);
    for (std::size_t i = 1; i < a.loglik_trace.size(); ++i)
        CHECK(a.loglik_trace[i] >= a.loglik_trace[i - 1] - 1e-8);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(a.trans.row(i).sum() - 1.0) < 1e-9);
        for (int j = 0; j < 3; ++j)
            if (!cfg.mask(i, j)) CHECK(a.trans(i, j) == 0.0);
    }
    CHECK(std::abs(a.pi.sum() - 1.0) < 1e-9);
    for (const auto& d : decode(a, ds)) {
        const auto labels = d.labels();
        for (std::size_t i = 1; i < labels.size(); ++i) CHECK(labels[i] >= labels[i - 1]);
    }
}

TEST_CASE("invalid configs are rejected") {
    HmmConfig cfg;
    cfg.n_states = 2;
    cfg.emissions["x"] = EmissionKind::Bernoulli;
    cfg.mask = full_mask(2);
    cfg.mask(1, 1) = false;
    CHECK_THROWS_AS(validate(cfg), Error);
    cfg.mask = full_mask(2);
    cfg.emissions.clear();
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("an entirely missing variable leaves the likelihood unchanged") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        HmmModel with = random_model(rng, 3, 2, false);
        HmmModel without = with;
        without.emissions.pop_back();
        without.config.emissions.erase("v2");
        oracle::Grid obs;
        for (int t = 0; t < 5; ++t) obs.push_back({t % 2 ? 1.0 : 0.0, kNaN});
        const Subject s = subject_from_grid(obs);
        CHECK(loglikelihood(with, s) == loglikelihood(without, s));
    }
}

TEST_CASE("state relabeling leaves the likelihood unchanged") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const HmmModel m = random_model(rng, 3, 2, true);
        const std::vector<int> perm{2, 0, 1};
        HmmModel p = m;
        for (int i = 0; i < 3; ++i) {
            p.pi(perm[i]) = m.pi(i);
            for (int j = 0; j < 3; ++j) p.trans(perm[i], perm[j]) = m.trans(i, j);
            for (std::size_t v = 0; v < m.emissions.size(); ++v) {
                p.emissions[v].mean(perm[i]) = m.emissions[v].mean(i);
                if (m.emissions[v].variance.size()) p.emissions[v].variance(perm[i]) = m.emissions[v].variance(i);
            }
        }
        const Subject s = subject_from_grid({{1.0, 0.3}, {kNaN, -0.7}, {0.0, kNaN}, {1.0, 1.1}});
        CHECK(std::abs(loglikelihood(m, s) - loglikelihood(p, s)) < 1e-12);
    }
}

TEST_CASE("constant Gaussian variable trains with a floored variance") {
    Dataset ds;
    ds.schema = {{"g", VarKind::Continuous, VarRole::DynamicObserved}};
    for (int i = 0; i < 5; ++i) {
        Subject s;
        s.id = "S" + std::to_string(i);
        for (int t = 0; t < 4; ++t) s.visits.push_back(Visit{double(t), {{"g", 2.5}}});
        ds.subjects.push_back(s);
    }
    HmmConfig cfg;
    cfg.n_states = 2;
    cfg.emissions = default_emissions(ds);
    cfg.restarts = 1;
    const HmmModel m = train(ds, cfg);
    for (int k = 0; k < 2; ++k) CHECK(m.emissions[0].variance(k) >= cfg.variance_floor);
    CHECK(std::isfinite(m.train_loglik));
}

TEST_CASE("EM recovers a small forward chain") {
    const HmmModel truth = reference_model(3);
    SynthOptions opts;
    opts.n_subjects = 150;
    opts.visits_per_subject = 20;
    opts.seed = 21;
    const Dataset ds = sample_dataset(truth, opts);
    HmmConfig cfg;
    cfg.n_states = 3;
    cfg.emissions = default_emissions(ds);
    cfg.mask = forward_mask(3);
    cfg.restarts = 3;
    cfg.seed = 1;
    const HmmModel fit = train(ds, cfg);
    const auto perm = oracle::best_permutation(truth, fit);
    for (std::size_t v = 0; v < truth.emissions.size(); ++v)
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(truth.emissions[v].mean(k) - fit.emissions[v].mean(perm[k])) < 0.07);
}

TEST_CASE("cross-validation") {
    SynthOptions opts;
    opts.n_subjects = 10;
    opts.visits_per_subject = 5;
    opts.seed = 2;
    const Dataset ds = sample_dataset(reference_model(3), opts);

    const auto folds = assign_folds(10, 2, 77);
    CHECK(std::count(folds.begin(), folds.end(), 0) == 5);
    CHECK(std::count(folds.begin(), folds.end(), 1) == 5);

    std::vector<HmmConfig> cfgs(2);
    for (int i = 0; i < 2; ++i) {
        cfgs[i].n_states = i + 2;
        cfgs[i].emissions = default_emissions(ds);
        cfgs[i].restarts = 1;
        cfgs[i].max_iters = 30;
    }
    const auto a = cross_validate(ds, cfgs, 2, 77);
    const auto b = cross_validate(ds, cfgs, 2, 77);
    REQUIRE(a.size() == 2);
    CHECK(a[0].heldout_visits == ds.visit_count());
    CHECK(a[0].loglik_per_visit == b[0].loglik_per_visit);
    CHECK(a[1].fold_loglik == b[1].fold_loglik);

    try {
        cross_validate(ds, cfgs, 11, 1);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::FoldTooSmall);
    }
}
