#pragma once

// Scaled forward-backward and log-space Viterbi over a discrete-time chain.
// Emissions enter as a T x K matrix of log-likelihoods so the same routines
// serve every emission family; -inf marks an impossible (step, state).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace dpvis {

template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct ForwardBackwardResult {
    RowMajorMatrix<Scalar> posteriors;                         // T x K, rows sum to 1
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> expected_transitions;  // K x K, summed over t
    Scalar loglik = 0;
};

namespace detail {

// Shifts each row of the log-emission matrix by its maximum and exponentiates.
// Returns false when some step is impossible under every state.
template <typename Scalar, typename DerivedE>
bool scaled_emissions(const Eigen::MatrixBase<DerivedE>& log_emission, RowMajorMatrix<Scalar>& b,
                      Scalar& offset) {
    const Eigen::Index T = log_emission.rows();
    b.resize(T, log_emission.cols());
    offset = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
        const Scalar m = log_emission.row(t).maxCoeff();
        if (!(m > -std::numeric_limits<Scalar>::infinity())) return false;
        offset += m;
        b.row(t) = (log_emission.row(t).array() - m).exp();
    }
    return true;
}

}  // namespace detail

template <typename Scalar, typename DerivedPi, typename DerivedA, typename DerivedE>
Scalar forward_loglik(const Eigen::MatrixBase<DerivedPi>& pi, const Eigen::MatrixBase<DerivedA>& trans,
                      const Eigen::MatrixBase<DerivedE>& log_emission) {
    using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
    constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    const Eigen::Index T = log_emission.rows();
    if (T == 0) return 0;

    RowMajorMatrix<Scalar> b;
    Scalar ll = 0;
    if (!detail::scaled_emissions<Scalar>(log_emission, b, ll)) return neg_inf;

    Row alpha = pi.transpose().cwiseProduct(b.row(0));
    for (Eigen::Index t = 0;; ++t) {
        const Scalar c = alpha.sum();
        if (!(c > 0)) return neg_inf;
        ll += std::log(c);
        if (t + 1 == T) break;
        alpha /= c;
        alpha = (alpha * trans).cwiseProduct(b.row(t + 1));
    }
    return ll;
}

// Smoothed posteriors and expected transition counts. When the observations
// are impossible the log-likelihood is -inf and the posteriors are left empty.
template <typename Scalar, typename DerivedPi, typename DerivedA, typename DerivedE>
ForwardBackwardResult<Scalar> forward_backward(const Eigen::MatrixBase<DerivedPi>& pi,
                                               const Eigen::MatrixBase<DerivedA>& trans,
                                               const Eigen::MatrixBase<DerivedE>& log_emission,
                                               bool with_transitions = true) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    const Eigen::Index T = log_emission.rows();
    const Eigen::Index K = trans.rows();

    ForwardBackwardResult<Scalar> out;
    out.expected_transitions = Matrix::Zero(K, K);
    if (T == 0) return out;

    RowMajorMatrix<Scalar> b;
    Scalar ll = 0;
    if (!detail::scaled_emissions<Scalar>(log_emission, b, ll)) {
        out.loglik = neg_inf;
        return out;
    }

    RowMajorMatrix<Scalar> alpha(T, K);
    std::vector<Scalar> scale(static_cast<std::size_t>(T));
    alpha.row(0) = pi.transpose().cwiseProduct(b.row(0));
    for (Eigen::Index t = 0; t < T; ++t) {
        if (t > 0) alpha.row(t) = (alpha.row(t - 1) * trans).cwiseProduct(b.row(t));
        const Scalar c = alpha.row(t).sum();
        if (!(c > 0)) {
            out.loglik = neg_inf;
            return out;
        }
        scale[static_cast<std::size_t>(t)] = c;
        ll += std::log(c);
        alpha.row(t) /= c;
    }
    out.loglik = ll;

    RowMajorMatrix<Scalar> beta(T, K);
    beta.row(T - 1).setOnes();
    Matrix outer = Matrix::Zero(K, K);
    for (Eigen::Index t = T - 2; t >= 0; --t) {
        const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> w =
            b.row(t + 1).cwiseProduct(beta.row(t + 1)) / scale[static_cast<std::size_t>(t + 1)];
        beta.row(t) = (trans * w.transpose()).transpose();
        if (with_transitions) outer.noalias() += alpha.row(t).transpose() * w;
    }
    if (with_transitions) out.expected_transitions = outer.cwiseProduct(trans);

    out.posteriors = alpha.cwiseProduct(beta);
    for (Eigen::Index t = 0; t < T; ++t) out.posteriors.row(t) /= out.posteriors.row(t).sum();
    return out;
}

// Most probable state path. Among equally probable predecessors (and final
// states) the lowest index wins. Returns an empty path when no path has
// positive probability.
template <typename Scalar, typename DerivedPi, typename DerivedA, typename DerivedE>
std::vector<int> viterbi(const Eigen::MatrixBase<DerivedPi>& pi, const Eigen::MatrixBase<DerivedA>& trans,
                         const Eigen::MatrixBase<DerivedE>& log_emission, Scalar* path_logprob = nullptr) {
    using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
    constexpr Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
    const Eigen::Index T = log_emission.rows();
    const Eigen::Index K = trans.rows();
    if (T == 0) return {};

    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> log_trans = trans.array().log().matrix();
    Row delta = pi.transpose().array().log().matrix() + log_emission.row(0);
    Row next(K);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(T, K);
    back.row(0).setZero();
    for (Eigen::Index t = 1; t < T; ++t) {
        for (Eigen::Index j = 0; j < K; ++j) {
            Scalar best = neg_inf;
            int arg = 0;
            for (Eigen::Index i = 0; i < K; ++i) {
                const Scalar v = delta(i) + log_trans(i, j);
                if (v > best) {
                    best = v;
                    arg = static_cast<int>(i);
                }
            }
            next(j) = best + log_emission(t, j);
            back(t, j) = arg;
        }
        delta.swap(next);
    }
    Scalar best = neg_inf;
    int last = -1;
    for (Eigen::Index j = 0; j < K; ++j) {
        if (delta(j) > best) {
            best = delta(j);
            last = static_cast<int>(j);
        }
    }
    if (path_logprob) *path_logprob = best;
    if (last < 0) return {};
    std::vector<int> path(static_cast<std::size_t>(T));
    path.back() = last;
    for (Eigen::Index t = T - 1; t > 0; --t)
        path[static_cast<std::size_t>(t - 1)] = back(t, path[static_cast<std::size_t>(t)]);
    return path;
}

}  // namespace dpvis
