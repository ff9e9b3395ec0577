#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpvis/data.hpp"
#include "dpvis/hmm.hpp"
#include "dpvis/query.hpp"

namespace dpvis {

// nullopt scopes an aggregation to every subject.
using Scope = std::optional<SubjectSet>;

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using CountVector = std::vector<std::int64_t>;

inline constexpr int kHistogramBins = 10;

// Continuous: kHistogramBins + 1 edges over the variable's global range, last
// bin closed. Binary: edges hold the category values {0, 1}.
struct Histogram {
    bool categorical = false;
    std::vector<double> edges;
    CountVector counts;
};

struct FeatureCell {
    std::optional<double> mean;  // nullopt when no observed value
    std::optional<double> std;   // population standard deviation
    std::optional<double> normalized_mean;
    std::int64_t n_visits = 0;   // visits labeled with the state
    std::int64_t n_missing = 0;  // of those, missing this variable
    Histogram histogram;
};

struct FeatureSummary {
    int n_states = 0;
    std::vector<std::string> variables;
    std::vector<std::vector<FeatureCell>> cells;  // [variable][state]
};

FeatureSummary feature_summary(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states,
                               const Scope& scope);

struct ChordMatrix {
    CountMatrix pairs;       // consecutive-visit pair counts, diagonal included
    CountVector node_sizes;  // visits per state
};

ChordMatrix chord_matrix(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope);

// Column n holds each subject's n-th visit; links[n] joins columns n and n+1.
struct SankeyByVisit {
    std::vector<CountVector> stacks;
    std::vector<CountMatrix> links;
    std::optional<int> anchor;
    // Per column: subjects stacked below the anchor state (states < anchor).
    CountVector anchor_offsets;
};

SankeyByVisit sankey_by_visit(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope,
                              std::optional<int> anchor = std::nullopt);

// Column c covers ages [(first_bin + c) * bin, (first_bin + c + 1) * bin).
// A subject occupies every bin from its first to its last visit, carrying
// its last known state through bins without visits. entries/exits count
// subjects starting or ending in a column so flows balance exactly.
struct SankeyByTime {
    double bin_months = 12.0;
    long first_bin = 0;
    std::vector<CountVector> stacks;
    std::vector<CountMatrix> links;
    std::vector<CountVector> entries;
    std::vector<CountVector> exits;
};

SankeyByTime sankey_by_time(std::span<const DecodedSubject> decoded, int n_states, const Scope& scope,
                            double bin_months = 12.0);

// First-visit state -> state at the visit nearest the event age (earlier
// visit on ties). Subjects without the event land in no_event.
struct BipartiteSankey {
    std::string event;
    CountVector start;
    CountMatrix links;
    CountVector no_event;
};

BipartiteSankey bipartite(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states,
                          const Scope& scope, const std::string& event);

struct KdeCurve {
    std::vector<double> x;
    std::vector<double> density;
    double mean = 0.0;
    double bandwidth = 0.0;
    std::size_t n = 0;
};

// 0.9 * min(sample sd, IQR / 1.34) * n^(-1/5); 1.0 month when that is 0.
double silverman_bandwidth(std::span<const double> values);

// Gaussian KDE evaluated on `steps` uniform points over [lo, hi].
KdeCurve kde(std::span<const double> values, double lo, double hi, int steps);

struct EventDensity {
    std::string event;
    KdeCurve population;
    std::optional<KdeCurve> subgroup;  // same grid as population
};

// Event ages of scoped subjects; the grid spans the population range
// extended by 5 bandwidths on both sides.
EventDensity event_density(const Dataset& ds, const std::string& event, const Scope& subgroup, int steps = 256);

}  // namespace dpvis
