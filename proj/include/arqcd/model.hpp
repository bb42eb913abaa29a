// AR(q) models, validation, lifting to first order, and the two covariance
// fixed points (stationary state covariance and steady-state filter covariance).
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "arqcd/types.hpp"

namespace arqcd {

// =============================================================================
// Model types
// =============================================================================

/**
 * @brief AR(q) disturbance model  x_t = sum_i A_i x_{t-i} + w_t,  w_t ~ N(0, R).
 *
 * Coefficients are stored lag-first: coeffs[0] is A_1.
 */
template <typename Scalar> struct ArModel {
    int dim = 0;
    std::vector<Matrix<Scalar>> coeffs;
    Matrix<Scalar> innovation_cov;

    int order() const { return static_cast<int>(coeffs.size()); }
};

/// First-order model x_t = A x_{t-1} + w_t, w_t ~ N(0, R).
template <typename Scalar, int Dim = Eigen::Dynamic> struct FirstOrderModel {
    Matrix<Scalar, Dim> A;
    Matrix<Scalar, Dim> R;

    int dim() const { return static_cast<int>(A.rows()); }

    /// Same model stored with a different (fixed or dynamic) compile-time size.
    template <int NewDim> FirstOrderModel<Scalar, NewDim> resized() const {
        return FirstOrderModel<Scalar, NewDim>{A, R};
    }
};

/// Gaussian law of the disturbance at the change point.
template <typename Scalar, int Dim = Eigen::Dynamic> struct InitialStateDist {
    Vector<Scalar, Dim> mean;
    Matrix<Scalar, Dim> cov;

    template <int NewDim> InitialStateDist<Scalar, NewDim> resized() const {
        return InitialStateDist<Scalar, NewDim>{mean, cov};
    }
};

struct Finding {
    enum class Severity { kWarning, kError };
    Severity severity;
    std::string message;
};

struct ValidationReport {
    bool ok = true;
    std::vector<Finding> findings;

    void error(std::string msg) {
        ok = false;
        findings.push_back({Finding::Severity::kError, std::move(msg)});
    }
    void warning(std::string msg) { findings.push_back({Finding::Severity::kWarning, std::move(msg)}); }
};

inline constexpr double kSpdTolerance = 1e-10;
inline constexpr double kSingularConditionNumber = 1e12;
inline constexpr int kFixedPointMaxIterations = 10000;

// =============================================================================
// Lifting
// =============================================================================

/**
 * @brief Block form of an AR(q) model over stacked states.
 *
 * With x~_t = [x_{q(t-1)+1}; ...; x_{qt}] and the raw innovations of block t
 * stacked as e_t = [w_{q(t-1)+1}; ...; w_{qt}]:
 *
 *   x~_t = transition * x~_{t-1} + noise_gain * e_t.
 *
 * The lifted innovation covariance is noise_gain (I_q (x) R) noise_gainᵀ.
 */
template <typename Scalar> struct BlockForm {
    Matrix<Scalar> transition;
    Matrix<Scalar> noise_gain;
};

namespace detail {

template <typename Scalar> BlockForm<Scalar> block_form_unchecked(const ArModel<Scalar> &m) {
    const int k = m.dim;
    const int q = m.order();
    const int n = q * k;
    // Row j of the block (0-based) as a combination of the previous block's
    // entries (prev[j]) and of the current block's innovations (noise[j]).
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> prev(q), noise(q);
    for (int j = 0; j < q; ++j) {
        prev[j].setZero(k, n);
        noise[j].setZero(k, n);
        noise[j].middleCols(j * k, k).setIdentity();
        for (int lag = 1; lag <= q; ++lag) {
            const int src = j - lag;
            if (src >= 0) {
                prev[j] += m.coeffs[lag - 1] * prev[src];
                noise[j] += m.coeffs[lag - 1] * noise[src];
            } else {
                prev[j].middleCols((q + src) * k, k) += m.coeffs[lag - 1];
            }
        }
    }
    BlockForm<Scalar> out{Matrix<Scalar>(n, n), Matrix<Scalar>(n, n)};
    for (int j = 0; j < q; ++j) {
        out.transition.middleRows(j * k, k) = prev[j];
        out.noise_gain.middleRows(j * k, k) = noise[j];
    }
    return out;
}

template <typename Scalar> Matrix<Scalar> block_diagonal(const Matrix<Scalar> &block, int copies) {
    const auto k = block.rows();
    Matrix<Scalar> out = Matrix<Scalar>::Zero(k * copies, k * copies);
    for (int i = 0; i < copies; ++i) {
        out.block(i * k, i * k, k, k) = block;
    }
    return out;
}

template <typename Scalar> FirstOrderModel<Scalar> lift_unchecked(const ArModel<Scalar> &m) {
    const auto form = block_form_unchecked(m);
    const Matrix<Scalar> stacked = block_diagonal(m.innovation_cov, m.order());
    return {form.transition, symmetrized(form.noise_gain * stacked * form.noise_gain.transpose())};
}

} // namespace detail

// =============================================================================
// Validation
// =============================================================================

template <typename Scalar> ValidationReport validate_model(const ArModel<Scalar> &m) {
    ValidationReport report;
    if (m.dim < 1) {
        report.error("dim must be positive");
        return report;
    }
    if (m.order() < 1) {
        report.error("order must be positive");
        return report;
    }
    bool shapes_ok = true;
    for (int i = 0; i < m.order(); ++i) {
        const auto &a = m.coeffs[i];
        if (a.rows() != m.dim || a.cols() != m.dim) {
            report.error("coefficient A_" + std::to_string(i + 1) + " is not " + std::to_string(m.dim) + "x" +
                         std::to_string(m.dim));
            shapes_ok = false;
        } else if (!all_finite(a)) {
            report.error("coefficient A_" + std::to_string(i + 1) + " has NaN/inf entries");
            shapes_ok = false;
        }
    }
    const auto &r = m.innovation_cov;
    if (r.rows() != m.dim || r.cols() != m.dim) {
        report.error("innovation_cov is not " + std::to_string(m.dim) + "x" + std::to_string(m.dim));
        shapes_ok = false;
    } else if (!all_finite(r)) {
        report.error("innovation_cov has NaN/inf entries");
        shapes_ok = false;
    }
    if (!shapes_ok) {
        return report;
    }

    const Scalar scale = std::max(Scalar(1), r.cwiseAbs().maxCoeff());
    if ((r - r.transpose()).cwiseAbs().maxCoeff() > kSpdTolerance * scale) {
        report.error("innovation_cov is not symmetric");
    } else if (min_eigenvalue(r) <= Scalar(kSpdTolerance)) {
        report.error("innovation_cov is not positive definite");
    }

    for (int i = 0; i < m.order(); ++i) {
        const auto &a = m.coeffs[i];
        Eigen::JacobiSVD<Matrix<Scalar>> svd(a);
        const auto &sv = svd.singularValues();
        const Scalar smallest = sv(sv.size() - 1);
        if (smallest <= Scalar(0) || sv(0) / smallest > Scalar(kSingularConditionNumber)) {
            report.warning("coefficient A_" + std::to_string(i + 1) + " is singular or nearly singular");
        }
    }

    if (m.order() == 1) {
        if (operator_norm(m.coeffs[0]) >= Scalar(1)) {
            report.error("operator norm >= 1: model is not stable");
        }
    } else if (spectral_radius(detail::lift_unchecked(m).A) >= Scalar(1)) {
        report.error("spectral radius of lifted transition >= 1: model is not stable");
    }
    return report;
}

/// Validates and converts; throws std::invalid_argument listing the errors.
template <typename Scalar> void require_valid(const ArModel<Scalar> &m) {
    const auto report = validate_model(m);
    if (report.ok) {
        return;
    }
    std::string msg = "invalid AR model:";
    for (const auto &f : report.findings) {
        if (f.severity == Finding::Severity::kError) {
            msg += " " + f.message + ";";
        }
    }
    throw std::invalid_argument(msg);
}

template <typename Scalar> BlockForm<Scalar> block_form(const ArModel<Scalar> &m) {
    require_valid(m);
    return detail::block_form_unchecked(m);
}

/// AR(q) -> AR(1) over length-q blocks. For q = 1 this returns (A_1, R).
template <typename Scalar> FirstOrderModel<Scalar> lift_to_first_order(const ArModel<Scalar> &m) {
    require_valid(m);
    return detail::lift_unchecked(m);
}

// =============================================================================
// Covariance fixed points
// =============================================================================

/// One step of the forward-variable covariance recursion:
/// M = A S Aᵀ + R,  S' = M (M + I)^{-1}.
template <typename Scalar, int Dim>
Matrix<Scalar, Dim> forward_covariance_update(const FirstOrderModel<Scalar, Dim> &f, const Matrix<Scalar, Dim> &sigma) {
    const Matrix<Scalar, Dim> m = symmetrized(f.A * sigma * f.A.transpose() + f.R);
    const Matrix<Scalar, Dim> m_plus_i = m + Matrix<Scalar, Dim>::Identity(m.rows(), m.cols());
    const auto llt = cholesky(m_plus_i, "forward_covariance_update");
    // M (M+I)^{-1} = ((M+I)^{-1} M)ᵀ since both factors are symmetric.
    return symmetrized(llt.solve(m).transpose());
}

/**
 * @brief Stationary covariance of x_t = A x_{t-1} + w_t: the solution of
 * S = A S Aᵀ + R, by iterating the recursion from S = 0 (the partial sums of
 * sum_i A^i R (Aᵀ)^i).
 *
 * Stops once ‖S - A S Aᵀ - R‖_F <= tol * max(1, ‖S‖_F).
 */
template <typename Scalar, int Dim>
Matrix<Scalar, Dim> stationary_state_cov(const FirstOrderModel<Scalar, Dim> &f, Scalar tol = Scalar(1e-12),
                                         int max_iterations = kFixedPointMaxIterations) {
    Matrix<Scalar, Dim> sigma = f.R;
    for (int it = 0; it < max_iterations; ++it) {
        const Matrix<Scalar, Dim> next = symmetrized(f.A * sigma * f.A.transpose() + f.R);
        const Scalar residual = (sigma - next).norm();
        sigma = next;
        if (residual <= tol * std::max(Scalar(1), sigma.norm())) {
            return sigma;
        }
    }
    throw NumericalError("stationary_state_cov: no convergence (is A stable?)");
}

/**
 * @brief Limit of the forward covariance recursion, iterated from S = 0 until
 * successive iterates differ by at most tol in Frobenius norm.
 */
template <typename Scalar, int Dim>
Matrix<Scalar, Dim> fixed_point_sigma_star(const FirstOrderModel<Scalar, Dim> &f, Scalar tol = Scalar(1e-12),
                                           int max_iterations = kFixedPointMaxIterations) {
    Matrix<Scalar, Dim> sigma = Matrix<Scalar, Dim>::Zero(f.dim(), f.dim());
    for (int it = 0; it < max_iterations; ++it) {
        Matrix<Scalar, Dim> next = forward_covariance_update(f, sigma);
        const Scalar step = (next - sigma).norm();
        sigma = std::move(next);
        if (step <= tol) {
            return sigma;
        }
    }
    throw NumericalError("fixed_point_sigma_star: iteration cap exceeded");
}

/// N(0, stationary_state_cov(f)).
template <typename Scalar, int Dim> InitialStateDist<Scalar, Dim> stationary_init(const FirstOrderModel<Scalar, Dim> &f) {
    return {Vector<Scalar, Dim>::Zero(f.dim()), stationary_state_cov(f)};
}

// =============================================================================
// Random models
// =============================================================================

/**
 * @brief Random first-order model with ‖A‖_2 = norm and a well-conditioned
 * SPD innovation covariance. Used for the high-dimensional example and for
 * randomized tests.
 */
template <typename Scalar, typename Urbg>
FirstOrderModel<Scalar> random_stable_first_order(int dim, Urbg &rng, Scalar norm) {
    std::normal_distribution<Scalar> normal;
    Matrix<Scalar> a(dim, dim), b(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            a(i, j) = normal(rng);
            b(i, j) = normal(rng);
        }
    }
    a *= norm / operator_norm(a);
    Matrix<Scalar> r = b * b.transpose() / Scalar(dim) + Scalar(0.5) * Matrix<Scalar>::Identity(dim, dim);
    return {a, symmetrized(r)};
}

} // namespace arqcd
