#pragma once

#include <cstdint>

#include "dpvis/data.hpp"
#include "dpvis/hmm.hpp"

namespace dpvis {

struct SynthOptions {
    int n_subjects = 200;
    int visits_per_subject = 20;
    double missing_rate = 0.2;
    int max_start_step = 12;  // first visit at a uniform grid step in [0, max_start_step]
    std::uint64_t seed = 0;
};

// Forward-only chain with n_states states over max(3, n_states - 1) binary
// markers named m1, m2, ...: P(stay) = 0.85, P(advance) = 0.15, the last
// state absorbing, pi proportional to 2^-k, and marker v positive with
// probability 0.9 in states k > v and 0.1 otherwise.
HmmModel reference_model(int n_states, double time_unit = 1.0);

// Samples visits on consecutive grid steps. Each dynamic cell is dropped
// independently with probability missing_rate. Adds a categorical static SEX
// and outcome events "onset" (first visit in the last state) and
// "seroconversion" (first visit with any observed positive marker).
Dataset sample_dataset(const HmmModel& model, const SynthOptions& opts);

}  // namespace dpvis
