#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dpvis/data.hpp"

namespace dpvis {

enum class EmissionKind { Bernoulli, Gaussian };

using TransitionMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

TransitionMask full_mask(int n_states);
// i -> i and i -> i+1 only.
TransitionMask forward_mask(int n_states);

struct HmmConfig {
    int n_states = 2;
    double time_unit = 1.0;  // months per grid step
    std::map<std::string, EmissionKind> emissions;
    TransitionMask mask;  // empty means full
    int restarts = 5;
    std::uint64_t seed = 0;
    int max_iters = 500;
    double rel_tol = 1e-6;
    // Relative to each variable's global variance.
    double variance_floor = 1e-4;
    // Bernoulli probabilities are kept inside [prob_floor, 1 - prob_floor].
    double prob_floor = 1e-6;

    TransitionMask effective_mask() const;
};

void validate(const HmmConfig& cfg);

// Emission parameters of one variable across states. For Bernoulli
// variables `mean` holds P(x = 1) and `variance` is empty.
struct EmissionParams {
    std::string variable;
    EmissionKind kind = EmissionKind::Bernoulli;
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

struct HmmModel {
    HmmConfig config;
    Eigen::VectorXd pi;
    Eigen::MatrixXd trans;
    std::vector<EmissionParams> emissions;  // ordered by variable name
    double train_loglik = 0.0;
    std::vector<double> loglik_trace;  // per EM iteration of the selected restart

    int n_states() const noexcept { return static_cast<int>(pi.size()); }
    std::vector<std::string> variables() const;
};

// A subject's visits placed on a uniform grid. values/observed are T x V;
// grid steps without a visit are fully unobserved.
struct GridSequence {
    std::string subject_id;
    long first_step = 0;
    Eigen::MatrixXd values;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;
    std::vector<Eigen::Index> visit_steps;  // one per visit, offsets from first_step

    Eigen::Index steps() const noexcept { return values.rows(); }
};

long grid_step(double age, double time_unit) noexcept;

GridSequence discretize(const Subject& subject, double time_unit, std::span<const std::string> variables);

// T x K log emission likelihoods; unobserved cells contribute nothing.
Eigen::MatrixXd emission_loglik(const HmmModel& model, const GridSequence& seq);

HmmModel train(const Dataset& ds, const HmmConfig& cfg);

double loglikelihood(const HmmModel& model, const Subject& subject);

struct DecodedVisit {
    double age = 0.0;
    int state = 0;
    Eigen::VectorXd posterior;
};

struct DecodedSubject {
    std::string subject_id;
    std::vector<DecodedVisit> visits;
    double loglik = 0.0;

    std::vector<int> labels() const;
};

DecodedSubject decode_subject(const HmmModel& model, const Subject& subject);
std::vector<DecodedSubject> decode(const HmmModel& model, const Dataset& ds);

struct CvRow {
    std::size_t config_index = 0;
    int n_states = 0;
    double heldout_loglik = 0.0;
    std::size_t heldout_visits = 0;
    double loglik_per_visit = 0.0;
    std::vector<double> fold_loglik;
};

// fold[i] in [0, folds) for subject i; deterministic in seed.
std::vector<int> assign_folds(std::size_t n_subjects, int folds, std::uint64_t seed);

std::vector<CvRow> cross_validate(const Dataset& ds, std::span<const HmmConfig> cfgs, int folds,
                                  std::uint64_t seed);

// Emission config that models every dynamic-observed variable: binary as
// Bernoulli, anything else as Gaussian.
std::map<std::string, EmissionKind> default_emissions(const Dataset& ds);

}  // namespace dpvis
