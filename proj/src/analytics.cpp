#include "dpvis/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "dpvis/error.hpp"

namespace dpvis {

namespace {

bool in_scope(const Scope& scope, const std::string& id) { return !scope || scope->count(id) > 0; }

std::vector<const DecodedSubject*> scoped(std::span<const DecodedSubject> decoded, const Scope& scope) {
    std::vector<const DecodedSubject*> out;
    for (const auto& d : decoded)
        if (in_scope(scope, d.subject_id)) out.push_back(&d);
    return out;
}

void check_state(int state, int n_states) {
    if (state < 0 || state >= n_states)
        throw Error(Errc::UnknownState, "decoded state " + std::to_string(state) + " outside [0, " +
                                            std::to_string(n_states) + ")");
}

Histogram make_histogram(const Variable& var, double lo, double hi) {
    Histogram h;
    if (var.kind == VarKind::Binary) {
        h.categorical = true;
        h.edges = {0.0, 1.0};
        h.counts.assign(2, 0);
        return h;
    }
    if (!(hi > lo)) hi = lo + 1.0;
    const double width = (hi - lo) / kHistogramBins;
    for (int i = 0; i <= kHistogramBins; ++i) h.edges.push_back(i == kHistogramBins ? hi : lo + i * width);
    h.counts.assign(kHistogramBins, 0);
    return h;
}

void add_to_histogram(Histogram& h, double x) {
    if (h.categorical) {
        ++h.counts[x == 1.0 ? 1 : 0];
        return;
    }
    const double lo = h.edges.front();
    const double hi = h.edges.back();
    auto bin = static_cast<long>(std::floor((x - lo) / (hi - lo) * kHistogramBins));
    bin = std::clamp<long>(bin, 0, kHistogramBins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
}

long time_bin(double age, double bin) { return static_cast<long>(std::floor(age / bin)); }

double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

FeatureSummary feature_summary(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states,
                               const Scope& scope) {
    if (scope && scope->empty()) throw Error(Errc::EmptyScope, "feature summary over an empty subgroup");
    std::unordered_map<std::string, const DecodedSubject*> by_id;
    for (const auto& d : decoded) by_id.emplace(d.subject_id, &d);

    FeatureSummary out;
    out.n_states = n_states;
    for (const auto& var : ds.schema) {
        if (!var.is_dynamic()) continue;
        out.variables.push_back(var.name);

        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& s : ds.subjects)
            for (const auto& v : s.visits) {
                auto it = v.values.find(var.name);
                if (it != v.values.end() && it->second) {
                    lo = std::min(lo, *it->second);
                    hi = std::max(hi, *it->second);
                }
            }
        if (lo > hi) lo = hi = 0.0;

        std::vector<FeatureCell> row(static_cast<std::size_t>(n_states));
        std::vector<double> sum(static_cast<std::size_t>(n_states), 0.0), n_obs(static_cast<std::size_t>(n_states), 0.0);
        for (auto& c : row) c.histogram = make_histogram(var, lo, hi);

        std::vector<std::vector<double>> values(static_cast<std::size_t>(n_states));
        for (const auto& s : ds.subjects) {
            if (!in_scope(scope, s.id)) continue;
            auto it = by_id.find(s.id);
            if (it == by_id.end()) continue;
            const auto& d = *it->second;
            for (std::size_t i = 0; i < s.visits.size() && i < d.visits.size(); ++i) {
                const int k = d.visits[i].state;
                check_state(k, n_states);
                auto& cell = row[static_cast<std::size_t>(k)];
                ++cell.n_visits;
                auto vit = s.visits[i].values.find(var.name);
                if (vit == s.visits[i].values.end() || !vit->second) {
                    ++cell.n_missing;
                    continue;
                }
                values[static_cast<std::size_t>(k)].push_back(*vit->second);
                add_to_histogram(cell.histogram, *vit->second);
            }
        }
        for (int k = 0; k < n_states; ++k) {
            const auto& xs = values[static_cast<std::size_t>(k)];
            if (xs.empty()) continue;
            double m = 0.0;
            for (double x : xs) m += x;
            m /= static_cast<double>(xs.size());
            double ss = 0.0;
            for (double x : xs) ss += (x - m) * (x - m);
            row[static_cast<std::size_t>(k)].mean = m;
            row[static_cast<std::size_t>(k)].std = std::sqrt(ss / static_cast<double>(xs.size()));
        }
        double mlo = std::numeric_limits<double>::infinity(), mhi = -mlo;
        for (const auto& c : row)
            if (c.mean) {
                mlo = std::min(mlo, *c.mean);
                mhi = std::max(mhi, *c.mean);
            }
        for (auto& c : row) {
            if (!c.mean) continue;
            c.normalized_mean = mhi > mlo ? (*c.mean - mlo) / (mhi - mlo) : 0.5;
        }
        out.cells.push_back(std::move(row));
    }
    return out;
}

ChordMatrix chord_matrix(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope) {
    ChordMatrix out;
    out.pairs = CountMatrix::Zero(n_states, n_states);
    out.node_sizes.assign(static_cast<std::size_t>(n_states), 0);
    for (const DecodedSubject* d : scoped(decoded, scope)) {
        for (std::size_t i = 0; i < d->visits.size(); ++i) {
            const int k = d->visits[i].state;
            check_state(k, n_states);
            ++out.node_sizes[static_cast<std::size_t>(k)];
            if (i > 0) ++out.pairs(d->visits[i - 1].state, k);
        }
    }
    return out;
}

SankeyByVisit sankey_by_visit(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope,
                              std::optional<int> anchor) {
    if (anchor) check_state(*anchor, n_states);
    const auto subjects = scoped(decoded, scope);
    std::size_t columns = 0;
    for (const auto* d : subjects) columns = std::max(columns, d->visits.size());

    SankeyByVisit out;
    out.anchor = anchor;
    out.stacks.assign(columns, CountVector(static_cast<std::size_t>(n_states), 0));
    out.links.assign(columns ? columns - 1 : 0, CountMatrix::Zero(n_states, n_states));
    for (const auto* d : subjects) {
        for (std::size_t n = 0; n < d->visits.size(); ++n) {
            const int k = d->visits[n].state;
            check_state(k, n_states);
            ++out.stacks[n][static_cast<std::size_t>(k)];
            if (n > 0) ++out.links[n - 1](d->visits[n - 1].state, k);
        }
    }
    if (anchor) {
        for (const auto& col : out.stacks) {
            std::int64_t below = 0;
            for (int k = 0; k < *anchor; ++k) below += col[static_cast<std::size_t>(k)];
            out.anchor_offsets.push_back(below);
        }
    }
    return out;
}

SankeyByTime sankey_by_time(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope,
                            double bin_months) {
    if (!(bin_months > 0.0)) throw Error(Errc::InvalidConfig, "time bin must be positive");
    const auto subjects = scoped(decoded, scope);
    SankeyByTime out;
    out.bin_months = bin_months;

    long lo = std::numeric_limits<long>::max(), hi = std::numeric_limits<long>::min();
    for (const auto* d : subjects) {
        if (d->visits.empty()) continue;
        lo = std::min(lo, time_bin(d->visits.front().age, bin_months));
        hi = std::max(hi, time_bin(d->visits.back().age, bin_months));
    }
    if (lo > hi) return out;
    out.first_bin = lo;
    const auto columns = static_cast<std::size_t>(hi - lo + 1);
    const CountVector zero(static_cast<std::size_t>(n_states), 0);
    out.stacks.assign(columns, zero);
    out.entries.assign(columns, zero);
    out.exits.assign(columns, zero);
    out.links.assign(columns - 1, CountMatrix::Zero(n_states, n_states));

    for (const auto* d : subjects) {
        if (d->visits.empty()) continue;
        const long first = time_bin(d->visits.front().age, bin_months);
        const long last = time_bin(d->visits.back().age, bin_months);
        std::size_t next = 0;
        int state = -1, prev = -1;
        for (long b = first; b <= last; ++b) {
            while (next < d->visits.size() && time_bin(d->visits[next].age, bin_months) == b) {
                state = d->visits[next].state;
                ++next;
            }
            check_state(state, n_states);
            const auto c = static_cast<std::size_t>(b - lo);
            ++out.stacks[c][static_cast<std::size_t>(state)];
            if (b == first) ++out.entries[c][static_cast<std::size_t>(state)];
            else ++out.links[c - 1](prev, state);
            if (b == last) ++out.exits[c][static_cast<std::size_t>(state)];
            prev = state;
        }
    }
    return out;
}

BipartiteSankey bipartite(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states,
                          const Scope& scope, const std::string& event) {
    const Variable* var = ds.find_variable(event);
    if (!var || var->role != VarRole::OutcomeEvent) throw Error(Errc::UnknownEvent, "unknown outcome event " + event);
    BipartiteSankey out;
    out.event = event;
    out.start.assign(static_cast<std::size_t>(n_states), 0);
    out.no_event.assign(static_cast<std::size_t>(n_states), 0);
    out.links = CountMatrix::Zero(n_states, n_states);
    std::unordered_map<std::string, const Subject*> subjects;
    for (const auto& s : ds.subjects) subjects.emplace(s.id, &s);

    for (const auto* d : scoped(decoded, scope)) {
        if (d->visits.empty()) continue;
        const int from = d->visits.front().state;
        check_state(from, n_states);
        ++out.start[static_cast<std::size_t>(from)];
        auto sit = subjects.find(d->subject_id);
        std::optional<double> at;
        if (sit != subjects.end()) {
            auto eit = sit->second->events.find(event);
            if (eit != sit->second->events.end()) at = eit->second;
        }
        if (!at) {
            ++out.no_event[static_cast<std::size_t>(from)];
            continue;
        }
        std::size_t nearest = 0;
        for (std::size_t i = 1; i < d->visits.size(); ++i)
            if (std::abs(d->visits[i].age - *at) < std::abs(d->visits[nearest].age - *at)) nearest = i;
        const int to = d->visits[nearest].state;
        check_state(to, n_states);
        ++out.links(from, to);
    }
    return out;
}

double silverman_bandwidth(std::span<const double> values) {
    if (values.empty()) throw Error(Errc::EmptyAges, "bandwidth needs at least one value");
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double x : values) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : values) ss += (x - mean) * (x - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    const double h = 0.9 * std::min(sd, iqr / 1.34) * std::pow(n, -0.2);
    return h > 0.0 ? h : 1.0;
}

KdeCurve kde(std::span<const double> values, double lo, double hi, int steps) {
    if (values.empty()) throw Error(Errc::EmptyAges, "density estimate needs at least one value");
    if (steps < 2 || !(hi > lo)) throw Error(Errc::InvalidConfig, "density grid needs hi > lo and at least 2 steps");
    KdeCurve out;
    out.n = values.size();
    out.bandwidth = silverman_bandwidth(values);
    for (double x : values) out.mean += x;
    out.mean /= static_cast<double>(values.size());
    const double h = out.bandwidth;
    const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    for (int i = 0; i < steps; ++i) {
        const double x = i + 1 == steps ? hi : lo + (hi - lo) * i / (steps - 1);
        double f = 0.0;
        for (double v : values) {
            const double z = (x - v) / h;
            f += std::exp(-0.5 * z * z);
        }
        out.x.push_back(x);
        out.density.push_back(f * norm);
    }
    return out;
}

EventDensity event_density(const Dataset& ds, const std::string& event, const Scope& subgroup, int steps) {
    const Variable* var = ds.find_variable(event);
    if (!var || var->role != VarRole::OutcomeEvent) throw Error(Errc::UnknownEvent, "unknown outcome event " + event);
    std::vector<double> all, sub;
    for (const auto& s : ds.subjects) {
        auto it = s.events.find(event);
        if (it == s.events.end()) continue;
        all.push_back(it->second);
        if (subgroup && subgroup->count(s.id)) sub.push_back(it->second);
    }
    if (all.empty()) throw Error(Errc::EmptyAges, "no subject has event " + event);
    const double h = silverman_bandwidth(all);
    const auto [mn, mx] = std::minmax_element(all.begin(), all.end());
    const double lo = *mn - 5.0 * h, hi = *mx + 5.0 * h;

    EventDensity out;
    out.event = event;
    out.population = kde(all, lo, hi, steps);
    if (subgroup) {
        if (sub.empty()) {
            KdeCurve empty;
            empty.x = out.population.x;
            empty.density.assign(empty.x.size(), 0.0);
            out.subgroup = std::move(empty);
        } else {
            out.subgroup = kde(sub, lo, hi, steps);
        }
    }
    return out;
}

}  // namespace dpvis
