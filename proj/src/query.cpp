#include "dpvis/query.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "dpvis/error.hpp"
#include "dpvis/patterns.hpp"

namespace dpvis {

namespace {

void check_window(const TimeWindow& w, const std::string& path) {
    if (!(w.min <= w.max)) throw Error(Errc::InvalidQuery, "time window min exceeds max at " + path, path);
}

void check_state(int state, int n_states, const std::string& path) {
    if (state < 0 || (n_states > 0 && state >= n_states))
        throw Error(Errc::UnknownState, "unknown state " + std::to_string(state) + " at " + path, path);
}

bool node_ok(const NodeConstraint& n, const DecodedSubject& d, std::size_t j) {
    const auto& v = d.visits[j];
    if (v.state != n.state) return false;
    if (!n.time_window.contains(v.age)) return false;
    if (n.node_at == NodeAt::Begin && j != 0) return false;
    if (n.node_at == NodeAt::End && j + 1 != d.visits.size()) return false;
    if (n.min_posterior > 0.0) {
        if (v.posterior.size() <= n.state || v.posterior(n.state) < n.min_posterior) return false;
    }
    return true;
}

bool match_from(const DecodedSubject& d, const SequenceQuery& q, std::size_t node, std::size_t prev) {
    if (node == q.nodes.size()) return true;
    const std::size_t n_visits = d.visits.size();
    const auto& edge = q.edges[node - 1];
    const std::size_t last = edge.order == EdgeOrder::NextVisit ? std::min(prev + 2, n_visits) : n_visits;
    for (std::size_t j = prev + 1; j < last; ++j) {
        if (d.visits[j].age - d.visits[prev].age > edge.max_gap) break;  // ages increase
        if (node_ok(q.nodes[node], d, j) && match_from(d, q, node + 1, j)) return true;
    }
    return false;
}

std::string fmt_window(const TimeWindow& w) {
    std::ostringstream ss;
    ss << "[" << w.min << ", ";
    if (w.max == kUnbounded) ss << "inf";
    else ss << w.max;
    ss << "] mo";
    return ss.str();
}

}  // namespace

void validate(const SequenceQuery& q, int n_states, const std::string& path) {
    if (q.nodes.empty()) throw Error(Errc::EmptyQuery, "sequence query has no nodes", path + "/nodes");
    if (q.edges.size() + 1 != q.nodes.size())
        throw Error(Errc::InvalidQuery, "a query with n nodes needs n-1 edges", path + "/edges");
    for (std::size_t i = 0; i < q.nodes.size(); ++i) {
        const std::string p = path + "/nodes/" + std::to_string(i);
        const auto& n = q.nodes[i];
        check_state(n.state, n_states, p + "/state");
        check_window(n.time_window, p + "/time_window");
        if (!(n.min_posterior >= 0.0 && n.min_posterior <= 1.0))
            throw Error(Errc::InvalidQuery, "min_posterior must lie in [0, 1] at " + p, p + "/min_posterior");
    }
    for (std::size_t i = 0; i < q.edges.size(); ++i) {
        if (!(q.edges[i].max_gap >= 0.0)) {
            const std::string p = path + "/edges/" + std::to_string(i) + "/max_gap";
            throw Error(Errc::InvalidQuery, "max_gap must be non-negative at " + p, p);
        }
    }
}

bool match_sequence(const DecodedSubject& d, const SequenceQuery& q) {
    validate(q);
    for (std::size_t j = 0; j < d.visits.size(); ++j)
        if (node_ok(q.nodes[0], d, j) && match_from(d, q, 1, j)) return true;
    return false;
}

bool FilterExpr::references_states() const {
    if (const auto* a = std::get_if<And>(&node)) {
        return std::any_of(a->children.begin(), a->children.end(),
                           [](const FilterExpr& c) { return c.references_states(); });
    }
    return !std::holds_alternative<StaticEquals>(node);
}

namespace {

void validate_at(const FilterExpr& f, const Dataset& ds, int n_states, const std::string& path) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, StaticEquals>) {
                const Variable* v = ds.find_variable(n.var);
                if (!v || v->role != VarRole::Static)
                    throw Error(Errc::UnknownVariable, "unknown static variable " + n.var + " at " + path, path + "/var");
            } else if constexpr (std::is_same_v<T, StateAtTime>) {
                check_state(n.state, n_states, path + "/state");
                check_window(n.time_window, path + "/time_window");
            } else if constexpr (std::is_same_v<T, Transition>) {
                check_state(n.from_state, n_states, path + "/from_state");
                check_state(n.to_state, n_states, path + "/to_state");
                if (n.from_state == n.to_state)
                    throw Error(Errc::InvalidQuery, "transition needs distinct states at " + path, path);
                check_window(n.time_window, path + "/time_window");
            } else if constexpr (std::is_same_v<T, PatternContains>) {
                if (n.states.empty()) throw Error(Errc::InvalidQuery, "empty pattern at " + path, path + "/states");
                for (std::size_t i = 0; i < n.states.size(); ++i)
                    check_state(n.states[i], n_states, path + "/states/" + std::to_string(i));
            } else if constexpr (std::is_same_v<T, SequenceMatches>) {
                validate(n.query, n_states, path + "/query");
            } else {
                for (std::size_t i = 0; i < n.children.size(); ++i)
                    validate_at(n.children[i], ds, n_states, path + "/children/" + std::to_string(i));
            }
        },
        f.node);
}

class Evaluator {
public:
    Evaluator(const Dataset& ds, std::span<const DecodedSubject> decoded) : ds_(ds) {
        for (const auto& d : decoded) by_id_.emplace(d.subject_id, &d);
    }

    SubjectSet run(const FilterExpr& f) const {
        return std::visit([&](const auto& n) { return eval(n); }, f.node);
    }

private:
    template <typename Pred>
    SubjectSet scan(Pred pred) const {
        SubjectSet out;
        for (const auto& s : ds_.subjects) {
            auto it = by_id_.find(s.id);
            if (it != by_id_.end() && pred(*it->second)) out.insert(s.id);
        }
        return out;
    }

    SubjectSet eval(const StaticEquals& n) const {
        SubjectSet out;
        for (const auto& s : ds_.subjects) {
            auto it = s.statics.find(n.var);
            if (it != s.statics.end() && it->second && *it->second == n.value) out.insert(s.id);
        }
        return out;
    }

    SubjectSet eval(const StateAtTime& n) const {
        return scan([&](const DecodedSubject& d) {
            return std::any_of(d.visits.begin(), d.visits.end(), [&](const DecodedVisit& v) {
                return v.state == n.state && n.time_window.contains(v.age);
            });
        });
    }

    SubjectSet eval(const Transition& n) const {
        return scan([&](const DecodedSubject& d) {
            for (std::size_t i = 1; i < d.visits.size(); ++i) {
                if (d.visits[i - 1].state == n.from_state && d.visits[i].state == n.to_state &&
                    n.from_state != n.to_state && n.time_window.contains(d.visits[i].age))
                    return true;
            }
            return false;
        });
    }

    SubjectSet eval(const PatternContains& n) const {
        return scan([&](const DecodedSubject& d) { return contains_pattern(collapse(d).states, n.states); });
    }

    SubjectSet eval(const SequenceMatches& n) const {
        return scan([&](const DecodedSubject& d) { return match_sequence(d, n.query); });
    }

    SubjectSet eval(const And& n) const {
        SubjectSet out;
        for (const auto& s : ds_.subjects) out.insert(s.id);
        for (const auto& c : n.children) {
            const SubjectSet part = run(c);
            SubjectSet keep;
            std::set_intersection(out.begin(), out.end(), part.begin(), part.end(), std::inserter(keep, keep.end()));
            out = std::move(keep);
        }
        return out;
    }

    const Dataset& ds_;
    std::unordered_map<std::string, const DecodedSubject*> by_id_;
};

}  // namespace

void validate(const FilterExpr& f, const Dataset& ds, int n_states) { validate_at(f, ds, n_states, ""); }

SubjectSet evaluate(const Dataset& ds, std::span<const DecodedSubject> decoded, int n_states, const FilterExpr& f) {
    if (f.references_states() && decoded.empty() && !ds.subjects.empty())
        throw Error(Errc::NoActiveModel, "filter refers to states but nothing has been decoded");
    validate(f, ds, n_states);
    return Evaluator(ds, decoded).run(f);
}

std::string describe(const FilterExpr& f) {
    return std::visit(
        [](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            std::ostringstream ss;
            if constexpr (std::is_same_v<T, StaticEquals>) {
                ss << n.var << " = " << n.value;
            } else if constexpr (std::is_same_v<T, StateAtTime>) {
                ss << "state " << n.state << " at " << fmt_window(n.time_window);
            } else if constexpr (std::is_same_v<T, Transition>) {
                ss << "transition " << n.from_state << " -> " << n.to_state << " at " << fmt_window(n.time_window);
            } else if constexpr (std::is_same_v<T, PatternContains>) {
                ss << "pattern";
                for (int s : n.states) ss << " " << s;
            } else if constexpr (std::is_same_v<T, SequenceMatches>) {
                ss << "sequence ";
                for (std::size_t i = 0; i < n.query.nodes.size(); ++i) {
                    const auto& node = n.query.nodes[i];
                    if (i > 0) ss << (n.query.edges[i - 1].order == EdgeOrder::NextVisit ? " => " : " -> ");
                    ss << node.state;
                    if (node.node_at == NodeAt::Begin) ss << "@begin";
                    if (node.node_at == NodeAt::End) ss << "@end";
                }
            } else {
                if (n.children.empty()) return "all subjects";
                for (std::size_t i = 0; i < n.children.size(); ++i) {
                    if (i) ss << " AND ";
                    ss << describe(n.children[i]);
                }
            }
            return ss.str();
        },
        f.node);
}

}  // namespace dpvis
