// CuSum-type detectors for a change from i.i.d. N(0, I) noise to an AR(1)
// disturbance observed in noise.
//
//   ErgodicCusum    known (A, R); likelihood ratio anchored at t = 1
//   StationaryCusum known (A, R); i.i.d. CuSum against the stationary law of y
//   OgaCusum        unknown (A, R); one-step online gradient ascent estimates
#pragma once

#include <concepts>
#include <optional>
#include <stdexcept>
#include <vector>

#include "arqcd/filter.hpp"

namespace arqcd {

struct Alarm {
    long stopping_time = 0;
    double statistic_at_stop = 0;
};

// =============================================================================
// Ergodic CuSum
// =============================================================================

template <typename Scalar, int Dim = Eigen::Dynamic> struct ErgodicCusumState {
    std::optional<ForwardState<Scalar, Dim>> forward; ///< empty before the first sample
    InitialStateDist<Scalar, Dim> init;               ///< law of x_1 under the t0 = 1 hypothesis
    Scalar s = Scalar(0);                             ///< CuSum statistic S_t
    Scalar log_l = Scalar(0);                         ///< log L_t
    Scalar increment = Scalar(0);                     ///< log L_t - log L_{t-1}
    long t = 0;
};

template <typename Scalar, int Dim>
ErgodicCusumState<Scalar, Dim> make_ergodic_cusum(const InitialStateDist<Scalar, Dim> &init) {
    ErgodicCusumState<Scalar, Dim> state;
    state.init = init;
    return state;
}

/// S_t = max(0, S_{t-1} + log L_t - log L_{t-1}). The forward filter keeps
/// running when S_t clamps to zero; only the statistic restarts.
template <typename Scalar, int Dim>
ErgodicCusumState<Scalar, Dim> ergodic_cusum_step(const ErgodicCusumState<Scalar, Dim> &state,
                                                  const Vector<Scalar, Dim> &y, const FirstOrderModel<Scalar, Dim> &f) {
    ErgodicCusumState<Scalar, Dim> next = state;
    auto step = state.forward ? forward_step(*state.forward, y, f) : forward_init(state.init, y);
    next.increment = step.log_cond - log_p_infty(y);
    next.forward = std::move(step.state);
    next.log_l = state.log_l + next.increment;
    next.s = std::max(Scalar(0), state.s + next.increment);
    next.t = state.t + 1;
    return next;
}

// =============================================================================
// Stationary CuSum
// =============================================================================

template <typename Scalar, int Dim = Eigen::Dynamic> struct StationaryCusumState {
    Eigen::LLT<Matrix<Scalar, Dim>> obs_cov_llt; ///< Cholesky of Sigma + I
    Scalar s = Scalar(0);
    Scalar increment = Scalar(0);
    long t = 0;
};

/// stationary_obs_cov is the stationary covariance of y after the change, Sigma + I.
template <typename Scalar, int Dim>
StationaryCusumState<Scalar, Dim> make_stationary_cusum(const Matrix<Scalar, Dim> &stationary_obs_cov) {
    StationaryCusumState<Scalar, Dim> state;
    state.obs_cov_llt = cholesky(stationary_obs_cov, "stationary observation covariance");
    return state;
}

template <typename Scalar, int Dim>
StationaryCusumState<Scalar, Dim> make_stationary_cusum(const FirstOrderModel<Scalar, Dim> &f) {
    const Matrix<Scalar, Dim> cov = stationary_state_cov(f) + Matrix<Scalar, Dim>::Identity(f.dim(), f.dim());
    return make_stationary_cusum<Scalar, Dim>(cov);
}

template <typename Scalar, int Dim>
StationaryCusumState<Scalar, Dim> stationary_cusum_step(const StationaryCusumState<Scalar, Dim> &state,
                                                        const Vector<Scalar, Dim> &y) {
    StationaryCusumState<Scalar, Dim> next = state;
    next.increment = log_normal_density(y, Vector<Scalar, Dim>::Zero(y.size()), state.obs_cov_llt) - log_p_infty(y);
    next.s = std::max(Scalar(0), state.s + next.increment);
    next.t = state.t + 1;
    return next;
}

// =============================================================================
// Projection onto {X symmetric : eig(X) >= eps}
// =============================================================================

/// Symmetrizes x, floors its eigenvalues at eps and reassembles. This is the
/// Frobenius-nearest symmetric matrix with spectrum >= eps.
template <typename Scalar, int Dim>
Matrix<Scalar, Dim> proj_pd(const Matrix<Scalar, Dim> &x, Scalar eps) {
    if (!(eps > Scalar(0))) {
        throw std::invalid_argument("proj_pd: eps must be positive");
    }
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar, Dim>> es(symmetrized(x));
    const auto floored = es.eigenvalues().cwiseMax(eps);
    return symmetrized(es.eigenvectors() * floored.asDiagonal() * es.eigenvectors().transpose());
}

// =============================================================================
// OGA-CuSum
// =============================================================================

template <typename Scalar, int Dim = Eigen::Dynamic> struct HhatGradient {
    Matrix<Scalar, Dim> grad_a;
    Matrix<Scalar, Dim> grad_r;
    Scalar value;
};

/**
 * @brief Gradient of the estimated one-step conditional log-likelihood.
 *
 * With the filter state (mu, S) at time t held fixed, the conditional density
 * of y_{t+1} under parameters (A, R) is N(y; A mu, P) with
 * P = A S Aᵀ + R + I. Writing e = y - A mu and
 * G = 1/2 (P^{-1} e eᵀ P^{-1} - P^{-1}):
 *
 *   d/dR = G,    d/dA = 2 G A S + P^{-1} e muᵀ.
 *
 * S is assumed symmetric.
 */
template <typename Scalar, int Dim>
HhatGradient<Scalar, Dim> grad_h_hat(const Matrix<Scalar, Dim> &a_hat, const Matrix<Scalar, Dim> &r_hat,
                                     const Vector<Scalar, Dim> &mu_hat, const Matrix<Scalar, Dim> &sigma_hat,
                                     const Vector<Scalar, Dim> &y) {
    const int k = static_cast<int>(y.size());
    if (Eigen::LLT<Matrix<Scalar, Dim>>(symmetrized(r_hat)).info() != Eigen::Success) {
        throw std::invalid_argument("grad_h_hat: r_hat is not SPD");
    }
    const Matrix<Scalar, Dim> p = a_hat * sigma_hat * a_hat.transpose() + r_hat + Matrix<Scalar, Dim>::Identity(k, k);
    const auto llt = cholesky(p, "A S Aᵀ + R + I");
    const Vector<Scalar, Dim> e = y - a_hat * mu_hat;
    const Vector<Scalar, Dim> w = llt.solve(e);
    const Matrix<Scalar, Dim> p_inv = llt.solve(Matrix<Scalar, Dim>::Identity(k, k));
    const Matrix<Scalar, Dim> g = symmetrized(Scalar(0.5) * (w * w.transpose() - p_inv));

    HhatGradient<Scalar, Dim> out;
    out.grad_r = g;
    out.grad_a = Scalar(2) * g * a_hat * sigma_hat + w * mu_hat.transpose();
    out.value = Scalar(-0.5) * (Scalar(k) * log_two_pi<Scalar>() + log_det(llt) + e.dot(w));
    return out;
}

template <typename Scalar, int Dim = Eigen::Dynamic> struct OgaParams {
    Scalar beta = Scalar(1e-3);
    Scalar eps = Scalar(1e-4);
    Matrix<Scalar, Dim> a0;
    Matrix<Scalar, Dim> r0;
    Vector<Scalar, Dim> mu0;
    Matrix<Scalar, Dim> sigma0;
    bool reset_filter = true; ///< also restore (mu, S) when the statistic resets

    /// beta = 1e-3, eps = 1e-4, A0 = 0.1 I, R0 = I, mu0 = 0, S0 = I.
    static OgaParams defaults(int dim) {
        OgaParams p;
        p.a0 = Scalar(0.1) * Matrix<Scalar, Dim>::Identity(dim, dim);
        p.r0 = Matrix<Scalar, Dim>::Identity(dim, dim);
        p.mu0 = Vector<Scalar, Dim>::Zero(dim);
        p.sigma0 = Matrix<Scalar, Dim>::Identity(dim, dim);
        return p;
    }

    template <int NewDim> OgaParams<Scalar, NewDim> resized() const {
        return {beta, eps, a0, r0, mu0, sigma0, reset_filter};
    }
};

template <typename Scalar, int Dim = Eigen::Dynamic> struct OgaState {
    Matrix<Scalar, Dim> a_hat;
    Matrix<Scalar, Dim> r_hat;
    Vector<Scalar, Dim> mu_hat;
    Matrix<Scalar, Dim> sigma_hat;
    Scalar s_hat = Scalar(0);
    Scalar log_l_hat = Scalar(0);
    Scalar increment = Scalar(0);
    bool was_reset = false;
    long t = 0;
    OgaParams<Scalar, Dim> params; ///< step size, floor, and the reset values
};

template <typename Scalar, int Dim> OgaState<Scalar, Dim> make_oga_cusum(const OgaParams<Scalar, Dim> &params) {
    if (!(params.beta > Scalar(0)) || !(params.eps > Scalar(0))) {
        throw std::invalid_argument("OGA-CuSum: beta and eps must be positive");
    }
    OgaState<Scalar, Dim> state;
    state.a_hat = params.a0;
    state.r_hat = proj_pd(params.r0, params.eps);
    state.mu_hat = params.mu0;
    state.sigma_hat = params.sigma0;
    state.params = params;
    return state;
}

/**
 * @brief One iteration of the online-gradient-ascent CuSum loop.
 *
 * The filter moments advance with the current estimates; the increment is the
 * estimated conditional log-density minus log p_inf(y). A negative statistic
 * resets estimates, statistic and likelihood; otherwise (A, R) take a gradient
 * step with R projected back to spectrum >= eps.
 */
template <typename Scalar, int Dim>
OgaState<Scalar, Dim> oga_cusum_step(const OgaState<Scalar, Dim> &state, const Vector<Scalar, Dim> &y) {
    OgaState<Scalar, Dim> next = state;
    const Vector<Scalar, Dim> m = state.a_hat * state.mu_hat;
    const Matrix<Scalar, Dim> big_m = symmetrized(state.a_hat * state.sigma_hat * state.a_hat.transpose() + state.r_hat);
    auto [mu, sigma] = detail::condition_on_observation(m, big_m, y);
    const auto grad = grad_h_hat(state.a_hat, state.r_hat, state.mu_hat, state.sigma_hat, y);

    next.increment = grad.value - log_p_infty(y);
    next.log_l_hat = state.log_l_hat + next.increment;
    next.s_hat = state.s_hat + next.increment;
    next.t = state.t + 1;
    next.mu_hat = std::move(mu);
    next.sigma_hat = std::move(sigma);
    next.was_reset = next.s_hat < Scalar(0);
    if (next.was_reset) {
        next.a_hat = state.params.a0;
        next.r_hat = proj_pd(state.params.r0, state.params.eps);
        next.s_hat = Scalar(0);
        next.log_l_hat = Scalar(0);
        if (state.params.reset_filter) {
            next.mu_hat = state.params.mu0;
            next.sigma_hat = state.params.sigma0;
        }
    } else {
        next.a_hat = state.a_hat + state.params.beta * grad.grad_a;
        next.r_hat = proj_pd<Scalar, Dim>(state.r_hat + state.params.beta * grad.grad_r, state.params.eps);
    }
    return next;
}

// =============================================================================
// Detector objects and the stopping rule
// =============================================================================

template <typename D>
concept SequentialDetector = requires(D d, const typename D::VectorType &y) {
    { d.step(y) } -> std::convertible_to<typename D::ScalarType>;
    { d.statistic() } -> std::convertible_to<typename D::ScalarType>;
};

template <typename Scalar, int Dim = Eigen::Dynamic> class ErgodicCusum {
  public:
    using ScalarType = Scalar;
    using VectorType = Vector<Scalar, Dim>;

    ErgodicCusum(FirstOrderModel<Scalar, Dim> f, const InitialStateDist<Scalar, Dim> &init)
        : model_(std::move(f)), state_(make_ergodic_cusum(init)) {}
    explicit ErgodicCusum(FirstOrderModel<Scalar, Dim> f) : ErgodicCusum(f, stationary_init(f)) {}

    Scalar step(const VectorType &y) {
        state_ = ergodic_cusum_step(state_, y, model_);
        return state_.increment;
    }
    Scalar statistic() const { return state_.s; }
    const ErgodicCusumState<Scalar, Dim> &state() const { return state_; }

  private:
    FirstOrderModel<Scalar, Dim> model_;
    ErgodicCusumState<Scalar, Dim> state_;
};

template <typename Scalar, int Dim = Eigen::Dynamic> class StationaryCusum {
  public:
    using ScalarType = Scalar;
    using VectorType = Vector<Scalar, Dim>;

    explicit StationaryCusum(const FirstOrderModel<Scalar, Dim> &f) : state_(make_stationary_cusum(f)) {}

    Scalar step(const VectorType &y) {
        state_ = stationary_cusum_step(state_, y);
        return state_.increment;
    }
    Scalar statistic() const { return state_.s; }
    const StationaryCusumState<Scalar, Dim> &state() const { return state_; }

  private:
    StationaryCusumState<Scalar, Dim> state_;
};

template <typename Scalar, int Dim = Eigen::Dynamic> class OgaCusum {
  public:
    using ScalarType = Scalar;
    using VectorType = Vector<Scalar, Dim>;

    explicit OgaCusum(const OgaParams<Scalar, Dim> &params) : state_(make_oga_cusum(params)) {}

    Scalar step(const VectorType &y) {
        state_ = oga_cusum_step(state_, y);
        return state_.increment;
    }
    Scalar statistic() const { return state_.s_hat; }
    const OgaState<Scalar, Dim> &state() const { return state_; }

  private:
    OgaState<Scalar, Dim> state_;
};

/// tau = inf{t : statistic_t >= c}; empty if the observations run out first.
template <SequentialDetector D>
std::optional<Alarm> run_detector(D &detector, const std::vector<typename D::VectorType> &observations,
                                  typename D::ScalarType threshold) {
    if (!(threshold > 0)) {
        throw std::invalid_argument("run_detector: threshold must be positive");
    }
    for (std::size_t i = 0; i < observations.size(); ++i) {
        detector.step(observations[i]);
        if (detector.statistic() >= threshold) {
            return Alarm{static_cast<long>(i + 1), static_cast<double>(detector.statistic())};
        }
    }
    return std::nullopt;
}

} // namespace arqcd
