// Forward-variable recursion for the post-change likelihood.
//
// After the change, the joint density of (y_{t0..t}, x_t) is a scaled Gaussian
// c_t N(x_t; mu_t, Sigma_t). The ratio c_t / c_{t-1} is the conditional
// density of y_t given the past, so the log-likelihood is the running sum of
// log(c_t / c_{t-1}). Everything is kept in log space; c_t is never formed.
#pragma once

#include <stdexcept>
#include <utility>

#include "arqcd/model.hpp"

namespace arqcd {

template <typename Scalar, int Dim = Eigen::Dynamic> struct ForwardState {
    Vector<Scalar, Dim> mu;
    Matrix<Scalar, Dim> sigma;
    Scalar log_like = Scalar(0); ///< log p(y_{t0..t})
    long t = 0;
};

template <typename Scalar, int Dim = Eigen::Dynamic> struct StepResult {
    ForwardState<Scalar, Dim> state;
    Scalar log_cond; ///< log p(y_t | y_{t0..t-1})
};

namespace detail {

/**
 * @brief log(c_t / c_{t-1}) written in terms of the one-step prediction
 * (m, M) = (A mu_{t-1}, A Sigma_{t-1} Aᵀ + R):
 *
 *   -1/2 [ K log 2pi + log det M + log det(M^{-1} + I)
 *          + mᵀ M^{-1} m + yᵀ y - bᵀ (M^{-1} + I)^{-1} b ],   b = M^{-1} m + y.
 */
template <typename Scalar, int Dim>
Scalar log_cond_from_prediction(const Vector<Scalar, Dim> &m, const Matrix<Scalar, Dim> &big_m,
                                const Vector<Scalar, Dim> &y) {
    const int k = static_cast<int>(y.size());
    const auto llt_m = cholesky(big_m, "predicted covariance");
    const Matrix<Scalar, Dim> precision_plus_i =
        llt_m.solve(Matrix<Scalar, Dim>::Identity(k, k)) + Matrix<Scalar, Dim>::Identity(k, k);
    const auto llt_p = cholesky(precision_plus_i, "M^{-1} + I");
    const Vector<Scalar, Dim> m_whitened = llt_m.solve(m);
    const Vector<Scalar, Dim> b = m_whitened + y;
    const Scalar quad = m.dot(m_whitened) + y.squaredNorm() - b.dot(llt_p.solve(b));
    return Scalar(-0.5) * (Scalar(k) * log_two_pi<Scalar>() + log_det(llt_m) + log_det(llt_p) + quad);
}

/// Posterior moments after observing y, given prediction (m, M):
/// mu = (M+I)^{-1} m + M (M+I)^{-1} y,  Sigma = M (M+I)^{-1}.
template <typename Scalar, int Dim>
std::pair<Vector<Scalar, Dim>, Matrix<Scalar, Dim>>
condition_on_observation(const Vector<Scalar, Dim> &m, const Matrix<Scalar, Dim> &big_m, const Vector<Scalar, Dim> &y) {
    const int k = static_cast<int>(y.size());
    const auto llt = cholesky(big_m + Matrix<Scalar, Dim>::Identity(k, k), "M + I");
    Vector<Scalar, Dim> mu = llt.solve(m) + big_m * llt.solve(y);
    Matrix<Scalar, Dim> sigma = symmetrized(llt.solve(big_m).transpose());
    return {std::move(mu), std::move(sigma)};
}

} // namespace detail

/// First post-change sample: prior (m0, S0) on x_{t0} times g(y | x).
template <typename Scalar, int Dim>
StepResult<Scalar, Dim> forward_init(const InitialStateDist<Scalar, Dim> &init, const Vector<Scalar, Dim> &y1) {
    const int k = static_cast<int>(y1.size());
    if (init.cov.rows() != k || init.mean.size() != k) {
        throw std::invalid_argument("forward_init: dimension mismatch");
    }
    if (Eigen::LLT<Matrix<Scalar, Dim>>(symmetrized(init.cov)).info() != Eigen::Success) {
        throw std::invalid_argument("forward_init: initial covariance is not SPD");
    }
    auto [mu, sigma] = detail::condition_on_observation(init.mean, init.cov, y1);
    const auto obs_llt = cholesky(init.cov + Matrix<Scalar, Dim>::Identity(k, k), "S0 + I");
    const Scalar log_cond = log_normal_density(y1, init.mean, obs_llt);
    return {ForwardState<Scalar, Dim>{std::move(mu), std::move(sigma), log_cond, 1}, log_cond};
}

template <typename Scalar, int Dim>
StepResult<Scalar, Dim> forward_step(const ForwardState<Scalar, Dim> &state, const Vector<Scalar, Dim> &y,
                                     const FirstOrderModel<Scalar, Dim> &f) {
    const Vector<Scalar, Dim> m = f.A * state.mu;
    const Matrix<Scalar, Dim> big_m = symmetrized(f.A * state.sigma * f.A.transpose() + f.R);
    const Scalar log_cond = detail::log_cond_from_prediction(m, big_m, y);
    auto [mu, sigma] = detail::condition_on_observation(m, big_m, y);
    return {ForwardState<Scalar, Dim>{std::move(mu), std::move(sigma), state.log_like + log_cond, state.t + 1},
            log_cond};
}

/// log N(y; 0, I).
template <typename Derived> typename Derived::Scalar log_p_infty(const Eigen::MatrixBase<Derived> &y) {
    using Scalar = typename Derived::Scalar;
    return Scalar(-0.5) * (Scalar(y.size()) * log_two_pi<Scalar>() + y.squaredNorm());
}

/**
 * @brief Steady-state conditional log-density h(mu, y).
 *
 * The forward recursion started at Sigma = Sigma* keeps Sigma fixed; the
 * prediction A mu_{t-1} is then recoverable from the updated mean as
 * (M* + I)(mu - Sigma* y), M* = A Sigma* Aᵀ + R, and h is the conditional
 * log-density evaluated with that prediction.
 */
template <typename Scalar, int Dim>
Scalar h_star(const Vector<Scalar, Dim> &mu, const Vector<Scalar, Dim> &y, const FirstOrderModel<Scalar, Dim> &f,
              const Matrix<Scalar, Dim> &sigma_star) {
    const int k = f.dim();
    const Matrix<Scalar, Dim> big_m = symmetrized(f.A * sigma_star * f.A.transpose() + f.R);
    const Vector<Scalar, Dim> prediction = (big_m + Matrix<Scalar, Dim>::Identity(k, k)) * (mu - sigma_star * y);
    return detail::log_cond_from_prediction(prediction, big_m, y);
}

} // namespace arqcd
