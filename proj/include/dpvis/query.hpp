#pragma once

#include <limits>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dpvis/data.hpp"
#include "dpvis/hmm.hpp"

namespace dpvis {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// Closed interval of ages in months.
struct TimeWindow {
    double min = 0.0;
    double max = kUnbounded;

    bool contains(double age) const noexcept { return age >= min && age <= max; }
    bool operator==(const TimeWindow&) const = default;
};

enum class NodeAt { Any, Begin, End };
enum class EdgeOrder { Eventually, NextVisit };

struct NodeConstraint {
    int state = 0;
    TimeWindow time_window;
    NodeAt node_at = NodeAt::Any;
    double min_posterior = 0.0;

    bool operator==(const NodeConstraint&) const = default;
};

struct EdgeConstraint {
    double max_gap = kUnbounded;  // months between the two matched visits
    EdgeOrder order = EdgeOrder::Eventually;

    bool operator==(const EdgeConstraint&) const = default;
};

// edges[i] joins nodes[i] and nodes[i + 1].
struct SequenceQuery {
    std::vector<NodeConstraint> nodes;
    std::vector<EdgeConstraint> edges;

    bool operator==(const SequenceQuery&) const = default;
};

// Throws EmptyQuery or InvalidQuery; when n_states > 0 also UnknownState.
void validate(const SequenceQuery& q, int n_states = 0, const std::string& path = "");

// Backtracking search for a strictly time-increasing assignment of query
// nodes to visits that satisfies every node and edge constraint.
bool match_sequence(const DecodedSubject& decoded, const SequenceQuery& q);

struct FilterExpr;

struct StaticEquals {
    std::string var;
    std::string value;
    bool operator==(const StaticEquals&) const = default;
};

struct StateAtTime {
    int state = 0;
    TimeWindow time_window;
    bool operator==(const StateAtTime&) const = default;
};

// Consecutive visits labeled from -> to (from != to); the arrival visit's
// age must fall in the window.
struct Transition {
    int from_state = 0;
    int to_state = 0;
    TimeWindow time_window;
    bool operator==(const Transition&) const = default;
};

struct PatternContains {
    std::vector<int> states;
    bool operator==(const PatternContains&) const = default;
};

struct SequenceMatches {
    SequenceQuery query;
    bool operator==(const SequenceMatches&) const = default;
};

// Conjunction; empty = every subject.
struct And {
    std::vector<FilterExpr> children;
    bool operator==(const And&) const;
};

struct FilterExpr {
    std::variant<StaticEquals, StateAtTime, Transition, PatternContains, SequenceMatches, And> node;

    bool operator==(const FilterExpr&) const = default;
    bool references_states() const;
};

inline bool And::operator==(const And& other) const { return children == other.children; }

using SubjectSet = std::set<std::string>;

// Throws UnknownVariable / UnknownState / InvalidQuery with the offending
// node's path, e.g. "/children/1/query/nodes/0".
void validate(const FilterExpr& f, const Dataset& ds, int n_states);

// `decoded` must hold one entry per dataset subject when the filter refers
// to states; n_states bounds valid state ids.
SubjectSet evaluate(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states, const FilterExpr& f);

std::string describe(const FilterExpr& f);

}  // namespace dpvis
