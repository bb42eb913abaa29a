// Dense type aliases and small linear-algebra helpers shared by every module.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace arqcd {

template <typename Scalar, int Dim = Eigen::Dynamic>
using Matrix = Eigen::Matrix<Scalar, Dim, Dim>;

template <typename Scalar, int Dim = Eigen::Dynamic>
using Vector = Eigen::Matrix<Scalar, Dim, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Raised when a factorization or fixed-point iteration fails on an operand
/// that should have been well conditioned by construction.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived> &x) {
    return ((x + x.transpose()) * typename Derived::Scalar(0.5)).eval();
}

/// Cholesky factor of an SPD operand; throws NumericalError otherwise.
template <typename Derived>
auto cholesky(const Eigen::MatrixBase<Derived> &x, const char *what) {
    using Plain = typename Derived::PlainObject;
    Eigen::LLT<Plain> llt(symmetrized(x));
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + ": matrix is not positive definite");
    }
    return llt;
}

template <typename MatrixType>
typename MatrixType::Scalar log_det(const Eigen::LLT<MatrixType> &llt) {
    return typename MatrixType::Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

template <typename Scalar> Scalar log_two_pi() { return std::log(Scalar(2) * std::numbers::pi_v<Scalar>); }

/// log N(y; mean, cov) given the Cholesky factor of cov.
template <typename MatrixType, typename DerivedY, typename DerivedM>
typename MatrixType::Scalar log_normal_density(const Eigen::MatrixBase<DerivedY> &y,
                                               const Eigen::MatrixBase<DerivedM> &mean,
                                               const Eigen::LLT<MatrixType> &cov_llt) {
    using Scalar = typename MatrixType::Scalar;
    const auto z = cov_llt.matrixL().solve((y - mean).eval()).eval();
    const auto k = static_cast<Scalar>(y.size());
    return Scalar(-0.5) * (k * log_two_pi<Scalar>() + log_det(cov_llt) + z.squaredNorm());
}

template <typename Derived> bool all_finite(const Eigen::MatrixBase<Derived> &x) { return x.allFinite(); }

template <typename Derived> typename Derived::Scalar operator_norm(const Eigen::MatrixBase<Derived> &x) {
    using Plain = typename Derived::PlainObject;
    Eigen::JacobiSVD<Plain> svd(x.eval());
    return svd.singularValues().size() == 0 ? typename Derived::Scalar(0) : svd.singularValues()(0);
}

template <typename Derived> typename Derived::Scalar spectral_radius(const Eigen::MatrixBase<Derived> &x) {
    using Plain = typename Derived::PlainObject;
    Eigen::EigenSolver<Plain> es(x.eval(), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Derived> typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived> &x) {
    using Plain = typename Derived::PlainObject;
    Eigen::SelfAdjointEigenSolver<Plain> es(symmetrized(x), Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

} // namespace arqcd
