// Acceptance run: one PASS/FAIL line per criterion. Usage: acceptance <path-to-dpvis-cli>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "dpvis/analytics.hpp"
#include "dpvis/error.hpp"
#include "dpvis/hmm.hpp"
#include "dpvis/inference.hpp"
#include "dpvis/json_io.hpp"
#include "dpvis/layout.hpp"
#include "dpvis/patterns.hpp"
#include "dpvis/query.hpp"
#include "dpvis/synth.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace dpvis;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!r.pass) ++failures;
    std::ostringstream line;
    line.precision(3);
    line << (r.pass ? "PASS " : "FAIL ") << name << " (" << std::fixed << secs << " s): " << r.detail;
    std::cout << line.str() << std::endl;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(3);
    s << x;
    return s.str();
}

// ---- forward-backward / Viterbi oracle -----------------------------------

HmmModel random_model(std::mt19937_64& rng, int K, int V, bool gaussian_last) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    HmmModel m;
    m.config.n_states = K;
    m.pi.resize(K);
    for (int k = 0; k < K; ++k) m.pi(k) = u(rng);
    m.pi /= m.pi.sum();
    m.trans.resize(K, K);
    for (int i = 0; i < K; ++i) {
        for (int j = 0; j < K; ++j) m.trans(i, j) = u(rng);
        m.trans.row(i) /= m.trans.row(i).sum();
    }
    for (int v = 0; v < V; ++v) {
        EmissionParams e;
        e.variable = "v" + std::to_string(v + 1);
        e.kind = gaussian_last && v + 1 == V ? EmissionKind::Gaussian : EmissionKind::Bernoulli;
        e.mean.resize(K);
        if (e.kind == EmissionKind::Gaussian) {
            e.variance.resize(K);
            for (int k = 0; k < K; ++k) {
                e.mean(k) = 4.0 * u(rng) - 2.0;
                e.variance(k) = 0.2 + u(rng);
            }
        } else {
            for (int k = 0; k < K; ++k) e.mean(k) = u(rng);
        }
        m.config.emissions[e.variable] = e.kind;
        m.emissions.push_back(e);
    }
    return m;
}

Outcome fb_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240101);
    std::uniform_int_distribution<int> kdist(1, 3), tdist(1, 6), vdist(1, 3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_ll = 0.0, worst_post = 0.0;
    int path_mismatch = 0;
    for (int rep = 0; rep < 200; ++rep) {
        const int K = kdist(rng), T = tdist(rng), V = vdist(rng);
        const bool gaussian = rep % 3 == 0;
        const HmmModel m = random_model(rng, K, V, gaussian);
        oracle::Grid obs(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(V)));
        Subject s;
        s.id = "S";
        for (int t = 0; t < T; ++t) {
            Visit visit;
            visit.age = t;
            for (int v = 0; v < V; ++v) {
                const bool gauss = gaussian && v + 1 == V;
                double x = u(rng) < 0.25 ? std::nan("") : gauss ? 3.0 * u(rng) - 1.5 : (u(rng) < 0.5 ? 1.0 : 0.0);
                obs[static_cast<std::size_t>(t)][static_cast<std::size_t>(v)] = x;
                visit.values["v" + std::to_string(v + 1)] = std::isnan(x) ? Cell{} : Cell{x};
            }
            s.visits.push_back(visit);
        }
        const auto brute = oracle::enumerate_paths(m, obs);
        const Eigen::MatrixXd logb = emission_loglik(m, discretize(s, 1.0, m.variables()));
        const auto fb = forward_backward<double>(m.pi, m.trans, logb);
        worst_ll = std::max(worst_ll, std::abs(fb.loglik - std::log(brute.likelihood)));
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k)
                worst_post = std::max(worst_post, std::abs(fb.posteriors(t, k) -
                                                           brute.posteriors[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]));
        if (viterbi<double>(m.pi, m.trans, logb) != brute.best_path) ++path_mismatch;
        // public entry points agree with the kernels
        const auto d = decode_subject(m, s);
        if (std::abs(d.loglik - fb.loglik) > 1e-9) ++path_mismatch;
    }
    const double secs = elapsed_since(t0);
    const bool ok = worst_ll <= 1e-9 && worst_post <= 1e-9 && path_mismatch == 0 && secs < 10.0;
    return {ok, "200 models; max |dloglik| " + fmt(worst_ll) + ", max |dposterior| " + fmt(worst_post) +
                    ", Viterbi mismatches " + std::to_string(path_mismatch) + ", " + fmt(secs) + " s (limit 10 s)"};
}

// ---- EM recovery and monotonicity ------------------------------------------

std::vector<std::vector<double>> traces;  // every EM trace produced during the run

Outcome em_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    const HmmModel truth = reference_model(3);
    SynthOptions opts;
    opts.n_subjects = 200;
    opts.visits_per_subject = 20;
    opts.missing_rate = 0.2;
    opts.seed = 1;
    const Dataset ds = sample_dataset(truth, opts);
    HmmConfig cfg;
    cfg.n_states = 3;
    cfg.emissions = default_emissions(ds);
    cfg.mask = forward_mask(3);
    cfg.restarts = 5;
    cfg.seed = 1;
    const HmmModel fit = train(ds, cfg);
    traces.push_back(fit.loglik_trace);
    const double secs = elapsed_since(t0);

    const auto perm = oracle::best_permutation(truth, fit);
    double worst_e = 0.0, worst_t = 0.0;
    for (std::size_t v = 0; v < truth.emissions.size(); ++v)
        for (int k = 0; k < 3; ++k)
            worst_e = std::max(worst_e, std::abs(truth.emissions[v].mean(k) - fit.emissions[v].mean(perm[static_cast<std::size_t>(k)])));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            worst_t = std::max(worst_t, std::abs(truth.trans(i, j) - fit.trans(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)])));
    const bool ok = worst_e <= 0.05 && worst_t <= 0.05 && secs < 60.0;
    return {ok, "max emission error " + fmt(worst_e) + ", max transition error " + fmt(worst_t) + " (tol 0.05), " +
                    fmt(secs) + " s (limit 60 s)"};
}

Outcome em_monotone() {
    // extra single-restart runs over state counts, masks and a Gaussian variable
    for (int K = 1; K <= 5; ++K) {
        for (bool forward : {false, true}) {
            for (std::uint64_t seed : {3u, 4u}) {
                SynthOptions opts;
                opts.n_subjects = 60;
                opts.visits_per_subject = 10;
                opts.seed = seed * 17 + static_cast<std::uint64_t>(K);
                Dataset ds = sample_dataset(reference_model(3), opts);
                if (seed == 4u) {
                    ds.schema.push_back({"g", VarKind::Continuous, VarRole::DynamicObserved});
                    std::mt19937_64 rng(seed);
                    std::normal_distribution<double> z(0.0, 1.0);
                    for (auto& s : ds.subjects)
                        for (auto& v : s.visits) v.values["g"] = Cell{z(rng) + (v.values.at("m1").value_or(0.0) ? 2.0 : 0.0)};
                }
                HmmConfig cfg;
                cfg.n_states = K;
                cfg.emissions = default_emissions(ds);
                cfg.mask = forward ? forward_mask(K) : full_mask(K);
                cfg.restarts = 1;
                cfg.seed = seed;
                traces.push_back(train(ds, cfg).loglik_trace);
            }
        }
    }
    double worst = 0.0;
    std::size_t steps = 0;
    for (const auto& tr : traces)
        for (std::size_t i = 1; i < tr.size(); ++i, ++steps) worst = std::max(worst, tr[i - 1] - tr[i]);
    return {worst <= 1e-8, std::to_string(traces.size()) + " EM runs, " + std::to_string(steps) +
                               " iterations; largest decrease " + fmt(worst) + " (tol 1e-8)"};
}

// ---- CLI helpers ------------------------------------------------------------

std::string cli;

void run(const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("command failed: " + cmd);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome model_selection() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / "dpvis_acceptance_cv";
    fs::remove_all(dir);
    const std::string d = dir.string();
    run("synth --states 3 --subjects 200 --visits 20 --missing 0.2 --seed 1 --out-dir " + d + "/raw");
    run("ingest --visits " + d + "/raw/visits.csv --statics " + d + "/raw/statics.csv --events " + d +
        "/raw/events.csv --schema " + d + "/raw/schema.json --out " + d + "/dataset.json");
    run("cv --data " + d + "/dataset.json --states 2..20 --folds 5 --out " + d + "/cv.json");
    const double secs = elapsed_since(t0);
    const auto rows = read_json_file(dir / "cv.json").at("rows");
    std::vector<std::pair<double, int>> ranked;
    for (const auto& r : rows) ranked.emplace_back(r.at("heldout_loglik").get<double>(), r.at("n_states").get<int>());
    std::sort(ranked.rbegin(), ranked.rend());
    int rank = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i)
        if (ranked[i].second == 3) rank = static_cast<int>(i) + 1;
    fs::remove_all(dir);
    std::string top;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) top += (i ? "," : "") + std::to_string(ranked[i].second);
    const bool ok = rows.size() == 19 && rank >= 1 && rank <= 3 && secs < 900.0;
    return {ok, std::to_string(rows.size()) + " configs; generating K=3 ranked " + std::to_string(rank) +
                    " (top 3 by held-out loglik: " + top + "), " + fmt(secs) + " s (limit 900 s)"};
}

// ---- BIDE oracle --------------------------------------------------------------

Outcome bide_oracle() {
    std::mt19937_64 rng(500);
    std::uniform_int_distribution<int> nseq(1, 10), len(1, 8), item(0, 3), minsup(1, 4);
    int mismatches = 0, truncation = 0, short_patterns = 0;
    std::size_t closed_total = 0;
    for (int rep = 0; rep < 500; ++rep) {
        std::vector<std::vector<int>> db(static_cast<std::size_t>(nseq(rng)));
        for (auto& s : db) {
            s.resize(static_cast<std::size_t>(len(rng)));
            for (int& x : s) x = item(rng);
        }
        const int ms = minsup(rng);
        std::map<std::vector<int>, int> got;
        for (const auto& p : mine_closed(db, ms)) got.emplace(p.states, p.support);
        const auto expected = oracle::closed_patterns(db, ms);
        closed_total += expected.size();
        if (got != expected) ++mismatches;

        std::vector<CollapsedSequence> seqs;
        for (std::size_t i = 0; i < db.size(); ++i) seqs.push_back({"S" + std::to_string(i), db[i]});
        const auto all = mine_patterns(seqs, ms, kAllPatterns);
        const auto top = mine_patterns(seqs, ms, kDefaultTopPatterns);
        // expected reporting: closed patterns of length >= 2, support desc then lexicographic
        std::vector<MinedPattern> want;
        for (const auto& [p, sup] : expected)
            if (p.size() >= 2) want.push_back({p, sup});
        std::stable_sort(want.begin(), want.end(), [](const MinedPattern& a, const MinedPattern& b) {
            return a.support != b.support ? a.support > b.support : a.states < b.states;
        });
        if (all != want) ++mismatches;
        if (top.size() != std::min(want.size(), kDefaultTopPatterns) || !std::equal(top.begin(), top.end(), want.begin()))
            ++truncation;
        for (const auto& p : all) short_patterns += p.states.size() < 2;
    }
    const bool ok = mismatches == 0 && truncation == 0 && short_patterns == 0;
    return {ok, "500 instances, " + std::to_string(closed_total) + " closed patterns; mismatches " +
                    std::to_string(mismatches) + ", top-50 errors " + std::to_string(truncation) +
                    ", length<2 reported " + std::to_string(short_patterns)};
}

// ---- query oracle -------------------------------------------------------------

SequenceQuery paper_query() {
    return query_from_json(parse_json(R"({
        "nodes": [
            {"state": 8, "time_window": [0, 80], "node_at": "begin", "min_posterior": 0.75},
            {"state": 10, "time_window": [120, null], "node_at": "end", "min_posterior": 0.75}
        ]
    })"));
}

std::set<std::string> matched(const std::vector<DecodedSubject>& decoded, const SequenceQuery& q) {
    std::set<std::string> out;
    for (const auto& d : decoded)
        if (match_sequence(d, q)) out.insert(d.subject_id);
    return out;
}

bool subset(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Decoded cohort over 11 states whose visits span 0..~250 months, with a
// share of subjects built to satisfy the paper query.
std::vector<DecodedSubject> paper_cohort(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> state(0, 10), gap(3, 24), nvis(2, 14);
    std::vector<DecodedSubject> out;
    for (int i = 0; i < n; ++i) {
        DecodedSubject d;
        d.subject_id = "P" + std::to_string(i);
        const int m = nvis(rng);
        double age = 80.0 * u(rng);
        const bool planted = i % 4 == 0;
        for (int j = 0; j < m; ++j) {
            int s = state(rng);
            if (planted && j == 0) s = 8;
            if (planted && j + 1 == m) {
                s = 10;
                age = std::max(age, 120.0 + 40.0 * u(rng));
            }
            Eigen::VectorXd post = Eigen::VectorXd::Constant(11, 0.0);
            const double top = 0.5 + 0.5 * u(rng);
            post.setConstant((1.0 - top) / 10.0);
            post(s) = top;
            d.visits.push_back({age, s, post});
            age += gap(rng);
        }
        out.push_back(std::move(d));
    }
    return out;
}

Outcome query_oracle() {
    std::mt19937_64 rng(527);
    int mismatches = 0, positives = 0;
    for (int i = 0; i < 500; ++i) {
        const auto d = gen::random_decoded(rng, 8, 4);
        const auto q = gen::random_query(rng, 4, 4);
        const bool got = match_sequence(d, q);
        if (got != oracle::naive_match(d, q)) ++mismatches;
        positives += got;
    }

    const SequenceQuery q = paper_query();
    validate(q, 11);
    const auto cohort = paper_cohort(rng, 400);
    const auto base = matched(cohort, q);
    int paper_mismatch = 0;
    for (const auto& d : cohort) paper_mismatch += match_sequence(d, q) != oracle::naive_match(d, q);

    // tightening any constraint never grows the matched set
    int violations = 0;
    auto tighten = [&](const SequenceQuery& t) { violations += !subset(matched(cohort, t), base); };
    for (double shift : {10.0, 30.0}) {
        auto a = q;
        a.nodes[0].time_window.max -= shift;
        tighten(a);
        auto b = q;
        b.nodes[1].time_window.min += shift;
        tighten(b);
    }
    for (double p : {0.8, 0.9, 1.0}) {
        auto c = q;
        c.nodes[0].min_posterior = p;
        tighten(c);
        auto e = q;
        e.nodes[1].min_posterior = p;
        tighten(e);
    }
    for (double gap : {200.0, 100.0, 50.0}) {
        auto g = q;
        g.edges[0].max_gap = gap;
        tighten(g);
    }
    auto next = q;
    next.edges[0].order = EdgeOrder::NextVisit;
    tighten(next);
    auto longer = q;
    longer.nodes.insert(longer.nodes.begin() + 1, NodeConstraint{9, {}, NodeAt::Any, 0.0});
    longer.edges.push_back({});
    tighten(longer);

    const bool ok = mismatches == 0 && positives > 0 && paper_mismatch == 0 && violations == 0 && !base.empty();
    return {ok, "500 random instances, mismatches " + std::to_string(mismatches) + " (" + std::to_string(positives) +
                    " matches); paper query matched " + std::to_string(base.size()) + "/400, oracle mismatches " +
                    std::to_string(paper_mismatch) + ", monotonicity violations " + std::to_string(violations)};
}

// ---- aggregation conservation ---------------------------------------------------

std::int64_t total(const CountVector& v) { return std::accumulate(v.begin(), v.end(), std::int64_t{0}); }

double trapezoid(const KdeCurve& c) {
    double area = 0.0;
    for (std::size_t i = 1; i < c.x.size(); ++i) area += 0.5 * (c.density[i] + c.density[i - 1]) * (c.x[i] - c.x[i - 1]);
    return area;
}

Outcome aggregation() {
    std::mt19937_64 rng(628);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int visit_err = 0, time_err = 0, bip_err = 0, chord_err = 0;
    double worst_kde = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 2 + trial % 5, n = 20 + trial;
        std::vector<DecodedSubject> decoded;
        Dataset ds;
        ds.schema = {{"x", VarKind::Binary, VarRole::DynamicObserved}, {"onset", VarKind::Continuous, VarRole::OutcomeEvent}};
        std::int64_t visits = 0;
        for (int i = 0; i < n; ++i) {
            decoded.push_back(gen::random_decoded(rng, 12, K, "S" + std::to_string(i)));
            Subject s;
            s.id = decoded.back().subject_id;
            for (const auto& v : decoded.back().visits) s.visits.push_back({v.age, {{"x", 1.0}}});
            if (u(rng) < 0.7) s.events["onset"] = s.visits.front().age + 100.0 * u(rng);
            ds.subjects.push_back(std::move(s));
            visits += static_cast<std::int64_t>(decoded.back().visits.size());
        }
        Scope scope;
        if (trial % 2) {
            scope.emplace();
            for (int i = 0; i < n; i += 2) scope->insert("S" + std::to_string(i));
        }
        std::vector<DecodedSubject> in_scope;
        for (const auto& d : decoded)
            if (!scope || scope->count(d.subject_id)) in_scope.push_back(d);
        const auto n_in = static_cast<std::int64_t>(in_scope.size());
        std::int64_t visits_in = 0;
        for (const auto& d : in_scope) visits_in += static_cast<std::int64_t>(d.visits.size());

        // chord totals
        const auto chord = chord_matrix(decoded, K, scope);
        if (chord.pairs.sum() != visits_in - n_in || total(chord.node_sizes) != visits_in) ++chord_err;
        (void)visits;

        // sankey by visit: inflow == stack, outflow + subjects ending == stack
        const auto sv = sankey_by_visit(decoded, K, scope, trial % K);
        if (total(sv.stacks[0]) != n_in) ++visit_err;
        for (std::size_t c = 0; c < sv.stacks.size(); ++c) {
            CountVector ending(static_cast<std::size_t>(K), 0);
            for (const auto& d : in_scope)
                if (d.visits.size() == c + 1) ++ending[static_cast<std::size_t>(d.visits.back().state)];
            for (int k = 0; k < K; ++k) {
                const auto ks = static_cast<std::size_t>(k);
                const std::int64_t in = c ? sv.links[c - 1].col(k).sum() : sv.stacks[0][ks];
                const std::int64_t out = (c + 1 < sv.stacks.size() ? sv.links[c].row(k).sum() : 0) + ending[ks];
                if (in != sv.stacks[c][ks] || out != sv.stacks[c][ks]) ++visit_err;
            }
        }

        // sankey by time: inflow + entries == stack == outflow + exits
        for (double bin : {6.0, 12.0, 24.0}) {
            const auto st = sankey_by_time(decoded, K, scope, bin);
            std::int64_t entered = 0, exited = 0;
            for (std::size_t c = 0; c < st.stacks.size(); ++c) {
                entered += total(st.entries[c]);
                exited += total(st.exits[c]);
                for (int k = 0; k < K; ++k) {
                    const auto ks = static_cast<std::size_t>(k);
                    const std::int64_t in = (c ? st.links[c - 1].col(k).sum() : 0) + st.entries[c][ks];
                    const std::int64_t out = (c + 1 < st.stacks.size() ? st.links[c].row(k).sum() : 0) + st.exits[c][ks];
                    if (in != st.stacks[c][ks] || out != st.stacks[c][ks]) ++time_err;
                }
            }
            if (entered != n_in || exited != n_in) ++time_err;
        }

        // bipartite: every scoped subject leaves its start state exactly once
        const auto b = bipartite(ds, decoded, K, scope, "onset");
        if (total(b.start) != n_in) ++bip_err;
        for (int k = 0; k < K; ++k)
            if (b.links.row(k).sum() + b.no_event[static_cast<std::size_t>(k)] != b.start[static_cast<std::size_t>(k)]) ++bip_err;

        // KDE at the default grid size
        const auto e = event_density(ds, "onset", scope);
        worst_kde = std::max(worst_kde, std::abs(trapezoid(e.population) - 1.0));
        if (e.subgroup) worst_kde = std::max(worst_kde, std::abs(trapezoid(*e.subgroup) - 1.0));
    }
    // large skewed sample
    for (int n : {1000, 10000}) {
        std::vector<double> ages(static_cast<std::size_t>(n));
        std::gamma_distribution<double> g(4.0, 20.0);
        for (double& a : ages) a = g(rng);
        const double h = silverman_bandwidth(ages);
        const auto [lo, hi] = std::minmax_element(ages.begin(), ages.end());
        worst_kde = std::max(worst_kde, std::abs(trapezoid(kde(ages, *lo - 5 * h, *hi + 5 * h, 256)) - 1.0));
    }
    const bool ok = visit_err == 0 && time_err == 0 && bip_err == 0 && chord_err == 0 && worst_kde <= 1e-3;
    return {ok, "100 random cohorts; sankey-visit/time/bipartite violations " + std::to_string(visit_err) + "/" +
                    std::to_string(time_err) + "/" + std::to_string(bip_err) + ", chord total errors " +
                    std::to_string(chord_err) + ", max |KDE integral - 1| " + fmt(worst_kde) + " (tol 1e-3)"};
}

// ---- layout -----------------------------------------------------------------------

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

Outcome layout() {
    std::mt19937_64 rng(729);
    std::uniform_real_distribution<double> x(0.0, 240.0);
    std::uniform_int_distribution<int> lane(0, 4);
    std::vector<SwarmPoint> pts;
    for (int i = 0; i < 10000; ++i) pts.push_back({std::round(x(rng)), lane(rng)});
    const double r = 1.0;
    const auto y = beeswarm(pts, r);
    std::size_t overlaps = 0;
    std::vector<std::vector<std::size_t>> by_lane(5);
    for (std::size_t i = 0; i < pts.size(); ++i) by_lane[static_cast<std::size_t>(pts[i].lane)].push_back(i);
    for (const auto& idx : by_lane)
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = a + 1; b < idx.size(); ++b)
                if (std::hypot(pts[idx[a]].x - pts[idx[b]].x, y[idx[a]] - y[idx[b]]) < 2 * r) ++overlaps;

    // bundling: random trajectories plus the waterfall of a random cohort
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<Polyline> lines;
    for (int l = 0; l < 120; ++l) {
        Polyline p;
        double px = u(rng) / 10;
        for (int i = 0; i < 6; ++i) {
            p.push_back({px, std::floor(u(rng) / 20) * 20});
            px += 1 + u(rng) / 10;
        }
        lines.push_back(p);
    }
    const BundleParams params;
    const auto out = bundle(lines, params);
    const int count = final_subdivisions(params);
    std::size_t vertex_err = 0, x_err = 0;
    for (std::size_t l = 0; l < lines.size(); ++l) {
        std::size_t o = 0;
        const auto& in = lines[l];
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (o >= out[l].size() || !same_bits(out[l][o].x, in[i].x) || !same_bits(out[l][o].y, in[i].y)) ++vertex_err;
            ++o;
            if (i + 1 == in.size()) continue;
            for (int s = 1; s <= count; ++s, ++o) {
                const double t = static_cast<double>(s) / (count + 1);
                if (o >= out[l].size() || !same_bits(out[l][o].x, in[i].x + t * (in[i + 1].x - in[i].x))) ++x_err;
            }
        }
        if (o != out[l].size()) ++vertex_err;
    }

    std::vector<DecodedSubject> cohort;
    for (int i = 0; i < 150; ++i) cohort.push_back(gen::random_decoded(rng, 12, 4, "S" + std::to_string(i)));
    const auto wf = waterfall(cohort, std::nullopt);
    std::size_t wf_err = 0;
    for (std::size_t t = 0; t < wf.trajectories.size(); ++t) {
        // every dot center appears in its trajectory, bit for bit, in visit order
        const auto& traj = wf.trajectories[t].points;
        std::size_t o = 0;
        for (const auto& dot : wf.dots) {
            if (dot.subject_id != wf.trajectories[t].subject_id) continue;
            while (o < traj.size() && !(same_bits(traj[o].x, dot.x) && same_bits(traj[o].y, dot.lane * WaterfallParams{}.lane_spacing + dot.y))) ++o;
            if (o == traj.size()) ++wf_err;
        }
        for (std::size_t i = 1; i < traj.size(); ++i)
            if (traj[i].x < traj[i - 1].x) ++wf_err;
    }
    const bool ok = overlaps == 0 && vertex_err == 0 && x_err == 0 && wf_err == 0;
    return {ok, "beeswarm 10^4 points, overlaps " + std::to_string(overlaps) + "; bundling 120 lines, vertex errors " +
                    std::to_string(vertex_err) + ", x errors " + std::to_string(x_err) + "; waterfall errors " +
                    std::to_string(wf_err)};
}

// ---- end-to-end determinism -------------------------------------------------------------

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "dpvis_acceptance_e2e";
    fs::remove_all(root);
    for (const char* pass : {"a", "b"}) {
        const std::string d = (root / pass).string();
        run("synth --states 4 --subjects 80 --visits 12 --missing 0.2 --seed 5 --out-dir " + d + "/raw");
        run("ingest --visits " + d + "/raw/visits.csv --statics " + d + "/raw/statics.csv --events " + d +
            "/raw/events.csv --schema " + d + "/raw/schema.json --out " + d + "/dataset.json");
        run("train --data " + d + "/dataset.json --states 4 --mask forward --restarts 3 --seed 9 --out " + d + "/model.json");
        run("decode --data " + d + "/dataset.json --model " + d + "/model.json --out " + d + "/decoded.json");
        run("mine --decoded " + d + "/decoded.json --min-support 2 --top 50 --out " + d + "/patterns.json");
        run("export-aggregates --data " + d + "/dataset.json --decoded " + d + "/decoded.json --out-dir " + d + "/agg");
    }
    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const fs::path twin = root / "b" / fs::relative(entry.path(), root / "a");
        if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) ++differing;
    }
    std::size_t files_b = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "b")) files_b += entry.is_regular_file();
    fs::remove_all(root);
    const bool ok = files > 10 && files == files_b && differing == 0;
    return {ok, std::to_string(files) + " artifacts per run, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <dpvis-cli>\n";
        return 2;
    }
    cli = argv[1];
    const bool skip_cv = argc > 2 && std::string(argv[2]) == "--skip-cv";

    criterion("forward-backward/Viterbi oracle", fb_oracle);
    criterion("EM recovery", em_recovery);
    criterion("EM monotonicity", em_monotone);
    if (!skip_cv) criterion("model selection (cv --states 2..20 --folds 5)", model_selection);
    criterion("BIDE oracle", bide_oracle);
    criterion("query oracle", query_oracle);
    criterion("aggregation conservation", aggregation);
    criterion("layout", layout);
    criterion("end-to-end determinism", determinism);
    std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failing" << std::endl;
    return failures ? 1 : 0;
}
