#include "dpvis/patterns.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "dpvis/error.hpp"

namespace dpvis {

namespace {

using Sequence = std::vector<int>;

// A sequence containing the current prefix, and the index just past the
// prefix's first instance in it.
struct Projected {
    std::size_t seq;
    std::size_t pos;
};

class Bide {
public:
    Bide(std::span<const Sequence> db, int min_support) : db_(db), min_support_(min_support) {}

    std::vector<MinedPattern> run() {
        std::map<int, std::vector<Projected>> starts;
        for (std::size_t s = 0; s < db_.size(); ++s) {
            std::set<int> seen;
            for (std::size_t i = 0; i < db_[s].size(); ++i)
                if (seen.insert(db_[s][i]).second) starts[db_[s][i]].push_back({s, i + 1});
        }
        Sequence prefix;
        for (auto& [item, proj] : starts) {
            if (static_cast<int>(proj.size()) < min_support_) continue;
            prefix.assign(1, item);
            grow(prefix, proj);
        }
        return std::move(out_);
    }

private:
    void grow(Sequence& prefix, const std::vector<Projected>& proj) {
        const int support = static_cast<int>(proj.size());
        if (scan_periods(prefix, proj, /*semi=*/true)) return;  // BackScan

        // Local items: subjects whose remaining suffix contains each item.
        std::map<int, int> local;
        for (const auto& p : proj) {
            std::set<int> seen;
            const auto& s = db_[p.seq];
            for (std::size_t i = p.pos; i < s.size(); ++i)
                if (seen.insert(s[i]).second) ++local[s[i]];
        }
        bool forward_closed = true;
        for (const auto& [item, count] : local)
            if (count == support) forward_closed = false;
        if (forward_closed && !scan_periods(prefix, proj, /*semi=*/false)) out_.push_back({prefix, support});

        for (const auto& [item, count] : local) {
            if (count < min_support_) continue;
            std::vector<Projected> next;
            next.reserve(static_cast<std::size_t>(count));
            for (const auto& p : proj) {
                const auto& s = db_[p.seq];
                for (std::size_t i = p.pos; i < s.size(); ++i) {
                    if (s[i] == item) {
                        next.push_back({p.seq, i + 1});
                        break;
                    }
                }
            }
            prefix.push_back(item);
            grow(prefix, next);
            prefix.pop_back();
        }
    }

    // Looks for an item present in the i-th (semi-)maximum period of every
    // projected sequence, for some i. With semi = false a hit means a
    // backward extension exists; with semi = true the prefix can be pruned.
    bool scan_periods(const Sequence& prefix, const std::vector<Projected>& proj, bool semi) const {
        const std::size_t n = prefix.size();
        std::vector<std::set<int>> common(n);
        std::vector<bool> alive(n, true);
        bool first = true;
        std::vector<std::size_t> head(n), tail(n);
        for (const auto& p : proj) {
            const auto& s = db_[p.seq];
            // first instance
            for (std::size_t i = 0, j = 0; i < n; ++i, ++j) {
                while (s[j] != prefix[i]) ++j;
                head[i] = j;
            }
            // last-in-last (maximum) or last-in-first (semi-maximum) appearance
            std::size_t bound = semi ? head[n - 1] + 1 : s.size();
            for (std::size_t i = n; i-- > 0;) {
                std::size_t j = bound;
                while (s[--j] != prefix[i]) {}
                tail[i] = j;
                bound = j;
            }
            bool any_alive = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (!alive[i]) continue;
                const std::size_t lo = i == 0 ? 0 : head[i - 1] + 1;
                const std::size_t hi = tail[i];
                std::set<int> items;
                for (std::size_t k = lo; k < hi; ++k) items.insert(s[k]);
                if (first) {
                    common[i] = std::move(items);
                } else {
                    std::set<int> keep;
                    std::set_intersection(common[i].begin(), common[i].end(), items.begin(), items.end(),
                                          std::inserter(keep, keep.end()));
                    common[i] = std::move(keep);
                }
                if (common[i].empty()) alive[i] = false;
                any_alive = any_alive || alive[i];
            }
            first = false;
            if (!any_alive) return false;
        }
        for (std::size_t i = 0; i < n; ++i)
            if (alive[i] && !common[i].empty()) return true;
        return false;
    }

    std::span<const Sequence> db_;
    int min_support_;
    std::vector<MinedPattern> out_;
};

}  // namespace

CollapsedSequence collapse(const DecodedSubject& decoded) {
    CollapsedSequence out;
    out.subject_id = decoded.subject_id;
    for (const auto& v : decoded.visits)
        if (out.states.empty() || out.states.back() != v.state) out.states.push_back(v.state);
    return out;
}

std::vector<CollapsedSequence> mining_sequences(std::span<const DecodedSubject> decoded, bool collapse_runs) {
    std::vector<CollapsedSequence> out;
    out.reserve(decoded.size());
    for (const auto& d : decoded) {
        if (collapse_runs) out.push_back(collapse(d));
        else out.push_back(CollapsedSequence{d.subject_id, d.labels()});
    }
    return out;
}

bool contains_pattern(std::span<const int> states, std::span<const int> pattern) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < states.size() && j < pattern.size(); ++i)
        if (states[i] == pattern[j]) ++j;
    return j == pattern.size();
}

std::vector<MinedPattern> mine_closed(std::span<const std::vector<int>> sequences, int min_support) {
    if (min_support < 1) throw Error(Errc::InvalidConfig, "min_support must be at least 1");
    return Bide(sequences, min_support).run();
}

std::vector<MinedPattern> mine_patterns(std::span<const CollapsedSequence> seqs, int min_support, std::size_t top_n) {
    if (seqs.empty()) throw Error(Errc::EmptyInput, "no sequences to mine");
    std::vector<std::vector<int>> db;
    db.reserve(seqs.size());
    for (const auto& s : seqs) db.push_back(s.states);
    auto all = mine_closed(db, min_support);
    std::vector<MinedPattern> out;
    for (auto& p : all)
        if (p.states.size() >= 2) out.push_back(std::move(p));
    std::sort(out.begin(), out.end(), [](const MinedPattern& a, const MinedPattern& b) {
        if (a.support != b.support) return a.support > b.support;
        return a.states < b.states;
    });
    if (out.size() > top_n) out.resize(top_n);
    return out;
}

}  // namespace dpvis
