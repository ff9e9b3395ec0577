#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpvis/hmm.hpp"

namespace dpvis {

struct CollapsedSequence {
    std::string subject_id;
    std::vector<int> states;
};

struct MinedPattern {
    std::vector<int> states;
    int support = 0;  // distinct subjects containing the pattern

    bool operator==(const MinedPattern&) const = default;
};

CollapsedSequence collapse(const DecodedSubject& decoded);

// Collapsed sequences by default; with collapse = false the raw per-visit
// labels are mined instead.
std::vector<CollapsedSequence> mining_sequences(std::span<const DecodedSubject> decoded, bool collapse = true);

// True iff `pattern` is a subsequence of `states` (gaps allowed).
bool contains_pattern(std::span<const int> states, std::span<const int> pattern);

// All closed sequential patterns (any length) with support >= min_support,
// found with BIDE: bidirectional extension closure checking plus BackScan
// pruning, no candidate maintenance. Unordered.
std::vector<MinedPattern> mine_closed(std::span<const std::vector<int>> sequences, int min_support);

inline constexpr std::size_t kDefaultTopPatterns = 50;
inline constexpr int kDefaultMinSupport = 2;
inline constexpr std::size_t kAllPatterns = std::numeric_limits<std::size_t>::max();

// Closed patterns of length >= 2, ordered by support (descending) then
// lexicographically by states, truncated to top_n.
std::vector<MinedPattern> mine_patterns(std::span<const CollapsedSequence> seqs, int min_support,
                                        std::size_t top_n = kDefaultTopPatterns);

}  // namespace dpvis
