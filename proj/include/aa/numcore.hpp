#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <type_traits>

#include "aa/error.hpp"

namespace aa {

using Index = Eigen::Index;

// Column-major throughout; columns are data points.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Read-only views in a non-deduced context, so callers may pass any dense expression.
template <typename Scalar>
using VectorRef = std::type_identity_t<Eigen::Ref<const VectorX<Scalar>>>;
template <typename Scalar>
using RowVectorRef = std::type_identity_t<Eigen::Ref<const RowVectorX<Scalar>>>;

/// Absolute tolerance used when a relative one degenerates on zero-norm input.
inline constexpr double kAbsoluteFloor = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().array().isFinite().all();
}

/// Throws DataError unless every entry is finite and the matrix is non-empty.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw DataError(std::string(what) + ": empty matrix");
    }
    if (!all_finite(m)) {
        throw DataError(std::string(what) + ": non-finite entry");
    }
}

/// True when v is entrywise >= 0 and sums to one within `tol`.
template <typename Derived>
bool is_simplex(const Eigen::MatrixBase<Derived>& v, double tol = 1e-12) {
    using Scalar = typename Derived::Scalar;
    if (v.size() == 0) return false;
    if ((v.array() < Scalar(0)).any()) return false;
    return std::abs(static_cast<double>(v.sum()) - 1.0) <= tol;
}

/// True when every column of m lies on the simplex.
template <typename Derived>
bool columns_on_simplex(const Eigen::MatrixBase<Derived>& m, double tol = 1e-12) {
    for (Index j = 0; j < m.cols(); ++j) {
        if (!is_simplex(m.col(j), tol)) return false;
    }
    return true;
}

/// Zeroes entries below `threshold` in each column and rescales it to sum to one.
template <typename Scalar>
void sparsify_simplex_columns(MatrixX<Scalar>& m, Scalar threshold) {
    for (Index j = 0; j < m.cols(); ++j) {
        auto col = m.col(j);
        col = (col.array() < threshold).select(Scalar(0), col);
        const Scalar s = col.sum();
        if (s > Scalar(0)) col /= s;
    }
}

namespace detail {

template <typename Scalar>
void check_factor_shapes(const MatrixX<Scalar>& X, const MatrixX<Scalar>& B,
                         const MatrixX<Scalar>& A) {
    if (B.rows() != X.cols() || A.cols() != X.cols() || A.rows() != B.cols()) {
        throw DimensionError("factor shapes incompatible: X is " + std::to_string(X.rows()) + "x" +
                             std::to_string(X.cols()) + ", B is " + std::to_string(B.rows()) +
                             "x" + std::to_string(B.cols()) + ", A is " +
                             std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    }
}

}  // namespace detail

/// ||X - XBA||_F^2.
template <typename Scalar>
Scalar frobenius_objective(const MatrixX<Scalar>& X, const MatrixX<Scalar>& B,
                           const MatrixX<Scalar>& A) {
    detail::check_factor_shapes(X, B, A);
    const MatrixX<Scalar> Z = X * B;
    return (X - Z * A).squaredNorm();
}

/// Huber loss with threshold eps: quadratic u^2/(2 eps) + eps/2 inside [-eps, eps], |u| outside.
template <typename Scalar>
Scalar huber(Scalar u, Scalar eps) {
    if (!(eps > Scalar(0))) throw ParameterError("huber: eps must be positive");
    const Scalar a = std::abs(u);
    if (a <= eps) return u * u / (Scalar(2) * eps) + eps / Scalar(2);
    return a;
}

/// sum_i huber(||x_i - XB alpha_i||_2, eps).
template <typename Scalar>
Scalar robust_objective(const MatrixX<Scalar>& X, const MatrixX<Scalar>& B,
                        const MatrixX<Scalar>& A, Scalar eps) {
    detail::check_factor_shapes(X, B, A);
    if (!(eps > Scalar(0))) throw ParameterError("robust_objective: eps must be positive");
    const MatrixX<Scalar> R = X - (X * B) * A;
    Scalar total(0);
    for (Index i = 0; i < R.cols(); ++i) total += huber(R.col(i).norm(), eps);
    return total;
}

/// Residual R = X - ZA maintained across the beta sweep by rank-one corrections.
///
/// Every beta update adds (z_old - z_new) * alpha_row to R. Rounding accumulates, so the
/// fitter consults needs_refresh() and rebuilds R exactly when it fires.
template <typename Scalar>
class ResidualTracker {
public:
    static constexpr Index kRefreshPeriod = 25;

    ResidualTracker(const MatrixX<Scalar>& X, const MatrixX<Scalar>& Z,
                    const MatrixX<Scalar>& A) {
        refresh(X, Z, A);
    }

    const MatrixX<Scalar>& residual() const noexcept { return R_; }
    Index staleness() const noexcept { return staleness_; }

    void refresh(const MatrixX<Scalar>& X, const MatrixX<Scalar>& Z, const MatrixX<Scalar>& A) {
        if (Z.rows() != X.rows() || Z.cols() != A.rows() || A.cols() != X.cols()) {
            throw DimensionError("ResidualTracker::refresh: shapes incompatible");
        }
        R_.noalias() = X - Z * A;
        staleness_ = 0;
    }

    void apply_beta_update(const Eigen::Ref<const VectorX<Scalar>>& z_old,
                           const Eigen::Ref<const VectorX<Scalar>>& z_new,
                           const Eigen::Ref<const RowVectorX<Scalar>>& alpha_row) {
        if (z_old.size() != R_.rows() || z_new.size() != R_.rows() ||
            alpha_row.size() != R_.cols()) {
            throw DimensionError("ResidualTracker::apply_beta_update: dimension mismatch");
        }
        R_.noalias() += (z_old - z_new) * alpha_row;
        ++staleness_;
    }

    /// Refresh every kRefreshPeriod outer iterations or once staleness exceeds 10p.
    bool needs_refresh(Index outer_iteration, Index p) const noexcept {
        return (outer_iteration > 0 && outer_iteration % kRefreshPeriod == 0) ||
               staleness_ > 10 * p;
    }

private:
    MatrixX<Scalar> R_;
    Index staleness_ = 0;
};

}  // namespace aa
