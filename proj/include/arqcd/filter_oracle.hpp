// Brute-force joint density of a short post-change observation block.
// O((tK)^3); meant for cross-checking the forward recursion in tests.
#pragma once

#include <stdexcept>
#include <vector>

#include "arqcd/model.hpp"

namespace arqcd {

inline constexpr int kOracleMaxLength = 50;

/**
 * @brief log p(y_1..y_t) with the change at t = 1, from the stacked Gaussian:
 * mean_i = A^{i-1} m0, Cov(x_i, x_j) = A^{i-j} V_j (i >= j), V_1 = S0,
 * V_j = A V_{j-1} Aᵀ + R, Cov(y_i, y_j) = Cov(x_i, x_j) + [i == j] I.
 */
template <typename Scalar, int Dim>
Scalar joint_log_density_oracle(const FirstOrderModel<Scalar, Dim> &f, const InitialStateDist<Scalar, Dim> &init,
                                const std::vector<Vector<Scalar, Dim>> &ys) {
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using DenseVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const int t = static_cast<int>(ys.size());
    const int k = f.dim();
    if (t < 1 || t > kOracleMaxLength) {
        throw std::invalid_argument("joint_log_density_oracle: length must be in [1, 50]");
    }
    const Dense a = f.A;
    std::vector<Dense> v(t);
    std::vector<DenseVec> mean(t);
    v[0] = init.cov;
    mean[0] = init.mean;
    for (int i = 1; i < t; ++i) {
        v[i] = a * v[i - 1] * a.transpose() + Dense(f.R);
        mean[i] = a * mean[i - 1];
    }
    Dense cov = Dense::Zero(t * k, t * k);
    DenseVec y(t * k), mu(t * k);
    for (int j = 0; j < t; ++j) {
        y.segment(j * k, k) = ys[j];
        mu.segment(j * k, k) = mean[j];
        Dense block = v[j];
        for (int i = j; i < t; ++i) {
            cov.block(i * k, j * k, k, k) = block;
            cov.block(j * k, i * k, k, k) = block.transpose();
            block = a * block;
        }
        cov.block(j * k, j * k, k, k) += Dense::Identity(k, k);
    }
    Eigen::LLT<Dense> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("joint_log_density_oracle: covariance not SPD");
    }
    const DenseVec z = llt.matrixL().solve(y - mu);
    const Dense l = llt.matrixL();
    Scalar log_det = 0;
    for (int i = 0; i < t * k; ++i) {
        log_det += std::log(l(i, i));
    }
    log_det *= 2;
    return Scalar(-0.5) * (Scalar(t * k) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + log_det + z.squaredNorm());
}

} // namespace arqcd
