// Observation trajectories under the pre-change law (y = v) and the
// post-change law (y = x + v with x an AR(1) process started at t0).
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "arqcd/model.hpp"

namespace arqcd {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * @brief Independent generator for replicate `index` of a campaign.
 *
 * The stream is a pure function of (master_seed, stream, index); no state is
 * shared between replicates, so they can be generated in any order or
 * concurrently.
 */
inline Rng replicate_rng(std::uint64_t master_seed, std::uint64_t index, std::uint64_t stream = 0) {
    const std::uint64_t a = mix64(master_seed);
    const std::uint64_t b = mix64(a ^ mix64(stream + 0x632be59bd9b4e019ULL));
    const std::uint64_t c = mix64(b ^ index);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
    return Rng(seq);
}

template <typename Scalar, int Dim>
Vector<Scalar, Dim> standard_normal_vector(int dim, Rng &rng) {
    std::normal_distribution<Scalar> normal;
    Vector<Scalar, Dim> z(dim);
    for (int i = 0; i < dim; ++i) {
        z(i) = normal(rng);
    }
    return z;
}

// =============================================================================
// Configuration and trajectories
// =============================================================================

template <typename Scalar, int Dim = Eigen::Dynamic> struct ChangeConfig {
    std::optional<long> change_point; ///< 1-based t0; empty means no change
    long length = 0;
    std::optional<InitialStateDist<Scalar, Dim>> init; ///< law of x_{t0}; stationary when empty
};

template <typename Scalar, int Dim = Eigen::Dynamic> struct Trajectory {
    std::vector<Vector<Scalar, Dim>> observations; ///< y_1..y_T
    std::optional<long> change_point;
    std::vector<Vector<Scalar, Dim>> hidden_states; ///< x_{t0}..x_T
    std::uint64_t seed = 0;

    bool is_post_change(long t) const { return change_point && t >= *change_point; }
};

/**
 * @brief Sample-by-sample generator of y_1, y_2, ...
 *
 * At each post-change step the disturbance x_t is drawn first (from the
 * initial law at t0, from the transition afterwards), then the unit
 * measurement noise.
 */
template <typename Scalar, int Dim = Eigen::Dynamic> class ObservationStream {
  public:
    ObservationStream(const FirstOrderModel<Scalar, Dim> &f, std::optional<long> change_point,
                      const InitialStateDist<Scalar, Dim> &init, Rng rng)
        : model_(f), change_point_(change_point), init_mean_(init.mean), rng_(std::move(rng)) {
        if (change_point_ && *change_point_ < 1) {
            throw std::invalid_argument("change point must be >= 1");
        }
        init_chol_ = cholesky(init.cov, "initial state covariance").matrixL();
        innov_chol_ = cholesky(f.R, "innovation covariance").matrixL();
        state_.setZero(f.dim());
    }

    Vector<Scalar, Dim> next() {
        ++t_;
        const int k = model_.dim();
        if (is_post_change()) {
            if (t_ == *change_point_) {
                state_ = init_mean_ + init_chol_ * standard_normal_vector<Scalar, Dim>(k, rng_);
            } else {
                state_ = model_.A * state_ + innov_chol_ * standard_normal_vector<Scalar, Dim>(k, rng_);
            }
            return state_ + standard_normal_vector<Scalar, Dim>(k, rng_);
        }
        return standard_normal_vector<Scalar, Dim>(k, rng_);
    }

    long t() const { return t_; }
    bool is_post_change() const { return change_point_ && t_ >= *change_point_; }
    const Vector<Scalar, Dim> &hidden_state() const { return state_; }

  private:
    FirstOrderModel<Scalar, Dim> model_;
    std::optional<long> change_point_;
    Vector<Scalar, Dim> init_mean_;
    Matrix<Scalar, Dim> init_chol_;
    Matrix<Scalar, Dim> innov_chol_;
    Vector<Scalar, Dim> state_;
    Rng rng_;
    long t_ = 0;
};

template <typename Scalar, int Dim>
Trajectory<Scalar, Dim> generate_trajectory(const FirstOrderModel<Scalar, Dim> &f, const ChangeConfig<Scalar, Dim> &cfg,
                                            std::uint64_t seed) {
    if (cfg.length < 1) {
        throw std::invalid_argument("trajectory length must be >= 1");
    }
    if (cfg.change_point && (*cfg.change_point < 1 || *cfg.change_point > cfg.length)) {
        throw std::invalid_argument("change point must lie in [1, length] or be infinite");
    }
    const auto init = cfg.init ? *cfg.init : stationary_init(f);
    ObservationStream<Scalar, Dim> stream(f, cfg.change_point, init, replicate_rng(seed, 0));
    Trajectory<Scalar, Dim> out;
    out.change_point = cfg.change_point;
    out.seed = seed;
    out.observations.reserve(static_cast<std::size_t>(cfg.length));
    for (long t = 1; t <= cfg.length; ++t) {
        out.observations.push_back(stream.next());
        if (stream.is_post_change()) {
            out.hidden_states.push_back(stream.hidden_state());
        }
    }
    return out;
}

/// L^{-1} y for every sample, with noise_cov = L Lᵀ.
template <typename Scalar, int Dim>
std::vector<Vector<Scalar, Dim>> whiten(const std::vector<Vector<Scalar, Dim>> &samples,
                                        const Matrix<Scalar, Dim> &noise_cov) {
    Eigen::LLT<Matrix<Scalar, Dim>> llt(noise_cov);
    if (llt.info() != Eigen::Success || (noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > kSpdTolerance) {
        throw std::invalid_argument("whiten: noise covariance is not SPD");
    }
    std::vector<Vector<Scalar, Dim>> out;
    out.reserve(samples.size());
    for (const auto &y : samples) {
        out.push_back(llt.matrixL().solve(y));
    }
    return out;
}

} // namespace arqcd
