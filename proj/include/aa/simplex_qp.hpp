#pragma once

// Active-set solver for simplex-constrained least squares
//
//     min_{alpha in simplex}  f(alpha) = ||x - Z alpha||_2^2 .
//
// The solver only touches Z through its Gram matrix Q = Z^T Z and the vector c = Z^T x.
// Two operators provide them: ExplicitGram holds a precomputed Q that many right-hand
// sides can share (the alpha sweep), ImplicitGram computes the entries it needs from Z
// on demand (the beta sweep, where Z = X has n columns and Q would be n x n).
//
// On the simplex, f is unchanged if Q is replaced by Q + t 11^T and c by c + t 1 for any
// t. The solver works with this lifted Gram: it is positive definite on any affinely
// independent support, so supports of size m + 1 (a point strictly inside a simplex in
// R^m) keep a well-defined inverse even though Z_A^T Z_A is singular there.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "aa/error.hpp"
#include "aa/numcore.hpp"

namespace aa {

struct SolverOptions {
    /// KKT tolerance, relative to ||Z^T x||_inf + 1.
    double tol = 1e-9;
    /// Iteration cap; 0 selects 4p + 50.
    Index max_iter = 0;
    /// Lift t added to the Gram; negative selects the mean squared column norm of Z.
    double lift = -1.0;
    /// Record f after every iteration in SimplexSolution::trace.
    bool record_trace = false;
};

template <typename Scalar>
struct SimplexSolution {
    VectorX<Scalar> alpha;
    Scalar objective = Scalar(0);
    /// Largest KKT residual, relative to ||Z^T x||_inf + 1.
    Scalar kkt_violation = Scalar(0);
    Index iterations = 0;
    bool converged = false;
    std::vector<Scalar> trace;
};

template <typename Op>
concept GramOperator = requires(const Op& op, Index i, const VectorX<typename Op::Scalar>& v,
                                std::span<const Index> support, VectorX<typename Op::Scalar>& out) {
    typename Op::Scalar;
    { op.size() } -> std::convertible_to<Index>;
    { op.gram(i, i) } -> std::convertible_to<typename Op::Scalar>;
    { op.ztx() } -> std::convertible_to<const VectorX<typename Op::Scalar>&>;
    { op.mean_diagonal() } -> std::convertible_to<typename Op::Scalar>;
    { op.ambient_dim() } -> std::convertible_to<Index>;
    { op.objective(v, support) } -> std::convertible_to<typename Op::Scalar>;
    op.gram_times(v, support, out);
};

/// Gram operator backed by a precomputed Q = Z^T Z, shareable across right-hand sides.
template <typename ScalarT>
class ExplicitGram {
public:
    using Scalar = ScalarT;

    /// `ambient_dim` is the row count m of Z when known; it bounds the support by m + 1.
    ExplicitGram(std::shared_ptr<const MatrixX<Scalar>> gram, VectorX<Scalar> ztx, Scalar xx,
                 Index ambient_dim = -1)
        : gram_(std::move(gram)), ztx_(std::move(ztx)), xx_(xx), ambient_dim_(ambient_dim) {
        if (!gram_ || gram_->rows() != gram_->cols() || gram_->rows() != ztx_.size() ||
            ztx_.size() < 1) {
            throw DimensionError("ExplicitGram: Gram must be square and match Z^T x");
        }
        mean_diag_ = gram_->diagonal().mean();
    }

    static ExplicitGram from_data(const MatrixX<Scalar>& Z, const Eigen::Ref<const VectorX<Scalar>>& x) {
        if (Z.rows() != x.size()) throw DimensionError("ExplicitGram: x does not match Z rows");
        auto gram = std::make_shared<MatrixX<Scalar>>(Z.cols(), Z.cols());
        gram->template triangularView<Eigen::Lower>() = Z.transpose() * Z;
        *gram = gram->template selfadjointView<Eigen::Lower>();
        return ExplicitGram(std::move(gram), Z.transpose() * x, x.squaredNorm(), Z.rows());
    }

    Index size() const noexcept { return ztx_.size(); }
    Scalar gram(Index i, Index j) const { return (*gram_)(i, j); }
    const VectorX<Scalar>& ztx() const noexcept { return ztx_; }
    Scalar mean_diagonal() const noexcept { return mean_diag_; }
    Index ambient_dim() const noexcept { return ambient_dim_ < 0 ? size() : ambient_dim_; }

    void gram_times(const VectorX<Scalar>& alpha, std::span<const Index> support,
                    VectorX<Scalar>& out) const {
        out.setZero(size());
        for (Index k : support) out.noalias() += alpha[k] * gram_->col(k);
    }

    Scalar objective(const VectorX<Scalar>& alpha, std::span<const Index> support) const {
        Scalar quad(0), lin(0);
        for (Index a : support) {
            lin += alpha[a] * ztx_[a];
            for (Index b : support) quad += alpha[a] * alpha[b] * (*gram_)(a, b);
        }
        return std::max(Scalar(0), xx_ - Scalar(2) * lin + quad);
    }

private:
    std::shared_ptr<const MatrixX<Scalar>> gram_;
    VectorX<Scalar> ztx_;
    Scalar xx_;
    Index ambient_dim_;
    Scalar mean_diag_ = Scalar(0);
};

/// Gram operator that never forms Z^T Z; entries and products are computed from Z.
/// Holds a reference to Z, which must outlive the operator.
template <typename ScalarT>
class ImplicitGram {
public:
    using Scalar = ScalarT;

    ImplicitGram(const MatrixX<Scalar>& Z, const Eigen::Ref<const VectorX<Scalar>>& x,
                 std::shared_ptr<const VectorX<Scalar>> col_sqnorms = nullptr)
        : Z_(&Z), x_(x), ztx_(Z.transpose() * x), sqnorms_(std::move(col_sqnorms)) {
        if (Z.rows() != x.size()) throw DimensionError("ImplicitGram: x does not match Z rows");
        if (Z.cols() < 1) throw DimensionError("ImplicitGram: Z has no columns");
        if (!sqnorms_) {
            sqnorms_ = std::make_shared<VectorX<Scalar>>(Z.colwise().squaredNorm().transpose());
        } else if (sqnorms_->size() != Z.cols()) {
            throw DimensionError("ImplicitGram: column norm cache has the wrong size");
        }
        mean_diag_ = sqnorms_->mean();
    }

    Index size() const noexcept { return Z_->cols(); }
    Scalar gram(Index i, Index j) const {
        return i == j ? (*sqnorms_)[i] : Z_->col(i).dot(Z_->col(j));
    }
    const VectorX<Scalar>& ztx() const noexcept { return ztx_; }
    Scalar mean_diagonal() const noexcept { return mean_diag_; }
    Index ambient_dim() const noexcept { return Z_->rows(); }

    void gram_times(const VectorX<Scalar>& alpha, std::span<const Index> support,
                    VectorX<Scalar>& out) const {
        VectorX<Scalar> y = VectorX<Scalar>::Zero(Z_->rows());
        for (Index k : support) y.noalias() += alpha[k] * Z_->col(k);
        out.noalias() = Z_->transpose() * y;
    }

    Scalar objective(const VectorX<Scalar>& alpha, std::span<const Index> support) const {
        VectorX<Scalar> r = x_;
        for (Index k : support) r.noalias() -= alpha[k] * Z_->col(k);
        return r.squaredNorm();
    }

private:
    const MatrixX<Scalar>* Z_;
    VectorX<Scalar> x_;
    VectorX<Scalar> ztx_;
    std::shared_ptr<const VectorX<Scalar>> sqnorms_;
    Scalar mean_diag_ = Scalar(0);
};

/// Iterate of the active-set method: alpha, its ordered support, and the inverse of the
/// lifted active Gram (Z_A^T Z_A + t 11^T)^{-1}.
template <typename Scalar>
struct ActiveSetState {
    VectorX<Scalar> alpha;
    std::vector<Index> active;
    MatrixX<Scalar> gram;      // lifted active Gram, |A| x |A|
    MatrixX<Scalar> gram_inv;  // its inverse, maintained by bordering updates
    Scalar lift = Scalar(0);
    Index iter = 0;
    Index updates_since_refresh = 0;
    /// ||gram_inv * gram - I||_max measured at the last refactorization.
    Scalar refresh_residual = Scalar(0);

    static constexpr Index kRefreshEvery = 50;

    Index position_of(Index j) const {
        auto it = std::find(active.begin(), active.end(), j);
        return it == active.end() ? Index(-1) : Index(it - active.begin());
    }
    bool contains(Index j) const { return position_of(j) >= 0; }
};

template <typename Scalar>
struct KktReport {
    bool optimal = false;
    /// Most negative reduced gradient outside the support, when it violates optimality.
    std::optional<Index> entering;
    /// Common gradient value on the support.
    Scalar multiplier = Scalar(0);
    /// Largest KKT residual, relative to ||Z^T x||_inf + 1.
    Scalar violation = Scalar(0);
    VectorX<Scalar> gradient;
};

template <typename Scalar>
struct FeasibleStep {
    Scalar gamma = Scalar(1);
    std::optional<Index> leaving;
};

/// Lift used when SolverOptions::lift is negative.
template <GramOperator Op>
typename Op::Scalar default_lift(const Op& op) {
    using Scalar = typename Op::Scalar;
    const Scalar t = op.mean_diagonal();
    return t > Scalar(0) ? t : Scalar(1);
}

/// Rebuilds the active Gram and its inverse from scratch.
template <GramOperator Op>
void refactor(ActiveSetState<typename Op::Scalar>& state, const Op& op) {
    using Scalar = typename Op::Scalar;
    const Index a = Index(state.active.size());
    state.gram.resize(a, a);
    for (Index r = 0; r < a; ++r) {
        for (Index s = 0; s <= r; ++s) {
            const Scalar g = op.gram(state.active[r], state.active[s]) + state.lift;
            state.gram(r, s) = g;
            state.gram(s, r) = g;
        }
    }
    Eigen::LLT<MatrixX<Scalar>> llt(state.gram);
    if (llt.info() != Eigen::Success) {
        // Rounding pushed a nearly dependent support past definiteness; retry with a
        // ridge at the level of that rounding before giving up.
        MatrixX<Scalar> ridged = state.gram;
        ridged.diagonal().array() += Scalar(1e-13) * state.gram.diagonal().maxCoeff();
        llt.compute(ridged);
        if (llt.info() != Eigen::Success) {
            throw NumericError("active Gram is singular after refactorization");
        }
    }
    state.gram_inv = llt.solve(MatrixX<Scalar>::Identity(a, a));
    state.refresh_residual =
        (state.gram_inv * state.gram - MatrixX<Scalar>::Identity(a, a)).cwiseAbs().maxCoeff();
    state.updates_since_refresh = 0;
}

/// Starts from the vertex e_j0; the affine set of a single index is one point.
template <GramOperator Op>
ActiveSetState<typename Op::Scalar> make_vertex_state(const Op& op, Index j0,
                                                      typename Op::Scalar lift) {
    using Scalar = typename Op::Scalar;
    ActiveSetState<Scalar> state;
    state.alpha = VectorX<Scalar>::Zero(op.size());
    state.alpha[j0] = Scalar(1);
    state.active = {j0};
    state.lift = lift;
    refactor(state, op);
    return state;
}

/// Vertex minimizing f(e_j) = ||x - z_j||^2, ties to the smallest index.
template <GramOperator Op>
Index best_vertex(const Op& op) {
    using Scalar = typename Op::Scalar;
    Index best = 0;
    Scalar best_val = std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < op.size(); ++j) {
        const Scalar v = op.gram(j, j) - Scalar(2) * op.ztx()[j];
        if (v < best_val) {
            best_val = v;
            best = j;
        }
    }
    return best;
}

/// Adds j to the support, bordering the inverse in O(a^2) (plus the cost of Q[A, j]).
/// Returns false, leaving the state untouched, when z_j is numerically in the affine
/// hull of the current support.
template <GramOperator Op>
bool gram_inv_add(ActiveSetState<typename Op::Scalar>& state, const Op& op, Index j) {
    using Scalar = typename Op::Scalar;
    if (j < 0 || j >= op.size()) throw DimensionError("gram_inv_add: index out of range");
    if (state.contains(j)) throw ParameterError("gram_inv_add: index already active");

    const Index a = Index(state.active.size());
    if (a >= op.ambient_dim() + 1) return false;  // m + 1 points already span R^m affinely
    VectorX<Scalar> u(a);
    for (Index k = 0; k < a; ++k) u[k] = op.gram(state.active[k], j) + state.lift;
    const Scalar d = op.gram(j, j) + state.lift;
    const VectorX<Scalar> w = state.gram_inv * u;
    const Scalar schur = d - u.dot(w);
    const Scalar scale = std::max(d, state.gram.diagonal().maxCoeff());
    if (!(schur > Scalar(1e-10) * scale)) return false;

    MatrixX<Scalar> gram(a + 1, a + 1);
    gram.topLeftCorner(a, a) = state.gram;
    gram.col(a).head(a) = u;
    gram.row(a).head(a) = u.transpose();
    gram(a, a) = d;
    state.gram.swap(gram);

    MatrixX<Scalar> inv(a + 1, a + 1);
    inv.topLeftCorner(a, a) = state.gram_inv + (w * w.transpose()) / schur;
    inv.col(a).head(a) = -w / schur;
    inv.row(a).head(a) = -w.transpose() / schur;
    inv(a, a) = Scalar(1) / schur;
    state.gram_inv.swap(inv);

    state.active.push_back(j);
    state.alpha[j] = Scalar(0);
    if (++state.updates_since_refresh >= ActiveSetState<Scalar>::kRefreshEvery) {
        refactor(state, op);
    }
    return true;
}

namespace detail {

template <typename Scalar>
MatrixX<Scalar> drop_row_col(const MatrixX<Scalar>& m, Index r) {
    const Index a = m.rows();
    const Index tail = a - r - 1;
    MatrixX<Scalar> out(a - 1, a - 1);
    out.topLeftCorner(r, r) = m.topLeftCorner(r, r);
    out.topRightCorner(r, tail) = m.topRightCorner(r, tail);
    out.bottomLeftCorner(tail, r) = m.bottomLeftCorner(tail, r);
    out.bottomRightCorner(tail, tail) = m.bottomRightCorner(tail, tail);
    return out;
}

}  // namespace detail

/// Removes j from the support; the inverse is downdated with a Schur complement in O(a^2).
template <GramOperator Op>
void gram_inv_remove(ActiveSetState<typename Op::Scalar>& state, const Op& op, Index j) {
    using Scalar = typename Op::Scalar;
    const Index r = state.position_of(j);
    if (r < 0) throw ParameterError("gram_inv_remove: index not active");
    if (state.active.size() == 1) throw ParameterError("gram_inv_remove: support would be empty");

    const MatrixX<Scalar>& m = state.gram_inv;
    VectorX<Scalar> v(m.rows() - 1);
    v << m.col(r).head(r), m.col(r).tail(m.rows() - r - 1);
    const Scalar pivot = m(r, r);
    MatrixX<Scalar> inv = detail::drop_row_col(m, r);
    inv.noalias() -= (v * v.transpose()) / pivot;
    state.gram_inv.swap(inv);
    state.gram = detail::drop_row_col(state.gram, r);

    state.active.erase(state.active.begin() + r);
    state.alpha[j] = Scalar(0);
    if (++state.updates_since_refresh >= ActiveSetState<Scalar>::kRefreshEvery) {
        refactor(state, op);
    }
}

/// Direction q toward the minimizer of f over {sum = 1, support within A}.
/// q sums to zero and vanishes off the support.
template <GramOperator Op>
VectorX<typename Op::Scalar> reduced_step(ActiveSetState<typename Op::Scalar>& state,
                                          const Op& op) {
    using Scalar = typename Op::Scalar;
    const Index a = Index(state.active.size());
    VectorX<Scalar> c(a);
    for (Index k = 0; k < a; ++k) c[k] = op.ztx()[state.active[k]] + state.lift;

    VectorX<Scalar> target;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const VectorX<Scalar> u = state.gram_inv * c;
        const VectorX<Scalar> v = state.gram_inv.rowwise().sum();
        const Scalar mu = (Scalar(1) - u.sum()) / v.sum();
        target = u + mu * v;
        // Stationarity on the support: gram * target = c + mu 1.
        const Scalar resid = ((state.gram * target - c).array() - mu).abs().maxCoeff();
        const Scalar scale = state.gram.cwiseAbs().maxCoeff() * target.cwiseAbs().maxCoeff() +
                             c.cwiseAbs().maxCoeff();
        if (resid <= Scalar(1e-6) * scale || attempt == 1) break;
        refactor(state, op);
    }

    VectorX<Scalar> q = VectorX<Scalar>::Zero(op.size());
    for (Index k = 0; k < a; ++k) q[state.active[k]] = target[k] - state.alpha[state.active[k]];
    return q;
}

/// Multiplier-form optimality test at a point that is stationary on its support.
/// `excluded` (optional, size p) masks indices that may not enter.
template <GramOperator Op>
KktReport<typename Op::Scalar> kkt_check(const ActiveSetState<typename Op::Scalar>& state,
                                         const Op& op, double tol,
                                         const std::vector<char>* excluded = nullptr) {
    using Scalar = typename Op::Scalar;
    KktReport<Scalar> report;
    op.gram_times(state.alpha, state.active, report.gradient);
    report.gradient = Scalar(2) * (report.gradient - op.ztx());
    const VectorX<Scalar>& g = report.gradient;

    Scalar lambda(0);
    for (Index k : state.active) lambda += g[k];
    lambda /= Scalar(state.active.size());
    report.multiplier = lambda;

    const Scalar scale = op.ztx().cwiseAbs().maxCoeff() + Scalar(1);
    Scalar worst(0);
    for (Index k : state.active) worst = std::max(worst, std::abs(g[k] - lambda));

    std::vector<char> in_support(std::size_t(op.size()), 0);
    for (Index k : state.active) in_support[std::size_t(k)] = 1;
    Scalar most_negative(0);
    for (Index j = 0; j < op.size(); ++j) {
        if (in_support[std::size_t(j)]) continue;
        const Scalar reduced = g[j] - lambda;
        worst = std::max(worst, -reduced);
        if (excluded && (*excluded)[std::size_t(j)]) continue;
        if (reduced < -Scalar(tol) * scale && reduced < most_negative) {
            most_negative = reduced;
            report.entering = j;
        }
    }
    report.violation = worst / scale;
    report.optimal = !report.entering.has_value();
    return report;
}

/// Largest gamma in [0, 1] keeping alpha + gamma q feasible; reports the blocking index
/// (smallest on ties) when gamma < 1.
template <typename Scalar>
FeasibleStep<Scalar> step_to_feasible(const VectorX<Scalar>& alpha, const VectorX<Scalar>& q) {
    if (alpha.size() != q.size()) throw DimensionError("step_to_feasible: size mismatch");
    FeasibleStep<Scalar> step;
    for (Index j = 0; j < q.size(); ++j) {
        if (q[j] >= Scalar(0)) continue;
        const Scalar ratio = std::max(Scalar(0), -alpha[j] / q[j]);
        if (ratio < step.gamma) {
            step.gamma = ratio;
            step.leaving = j;
        }
    }
    return step;
}

/// Solves min_{alpha in simplex} ||x - Z alpha||^2 through the given Gram operator.
template <GramOperator Op>
SimplexSolution<typename Op::Scalar> solve(const Op& op, const SolverOptions& opts = {}) {
    using Scalar = typename Op::Scalar;
    if (!(opts.tol > 0)) throw ParameterError("solve: tol must be positive");
    if (opts.max_iter < 0) throw ParameterError("solve: max_iter must be positive");
    const Index p = op.size();
    if (!all_finite(op.ztx())) throw DataError("solve: non-finite input");

    const Index max_iter = opts.max_iter > 0 ? opts.max_iter : 4 * p + 50;
    const Scalar lift = opts.lift >= 0 ? Scalar(opts.lift) : default_lift(op);

    ActiveSetState<Scalar> state = make_vertex_state(op, best_vertex(op), lift);
    SimplexSolution<Scalar> sol;
    if (opts.record_trace) sol.trace.push_back(op.objective(state.alpha, state.active));

    double tol = opts.tol;
    bool tol_bumped = false;
    bool stationary = true;  // alpha minimizes f on the affine hull of its support
    Index zero_steps = 0;
    std::vector<char> rejected(std::size_t(p), 0);
    KktReport<Scalar> last_kkt;

    for (; state.iter < max_iter; ++state.iter) {
        if (stationary) {
            last_kkt = kkt_check(state, op, tol, &rejected);
            if (last_kkt.optimal) {
                sol.converged = true;
                break;
            }
            const Index j = *last_kkt.entering;
            if (!gram_inv_add(state, op, j)) {
                rejected[std::size_t(j)] = 1;
                continue;
            }
            stationary = false;
            continue;
        }

        const VectorX<Scalar> q = reduced_step(state, op);
        if (q.cwiseAbs().maxCoeff() <= Scalar(1e-14)) {
            stationary = true;
            continue;
        }
        const FeasibleStep<Scalar> step = step_to_feasible(state.alpha, q);
        state.alpha += step.gamma * q;
        if (step.leaving) {
            gram_inv_remove(state, op, *step.leaving);
            std::fill(rejected.begin(), rejected.end(), 0);
        } else {
            stationary = true;
        }
        // Clean rounding: support entries stay >= 0 and the total stays 1.
        for (Index k : state.active) state.alpha[k] = std::max(Scalar(0), state.alpha[k]);
        state.alpha /= state.alpha.sum();

        if (step.gamma == Scalar(0)) {
            if (++zero_steps > p) {
                refactor(state, op);
                if (!tol_bumped) {
                    tol *= 10.0;
                    tol_bumped = true;
                }
                zero_steps = 0;
            }
        } else {
            zero_steps = 0;
        }
        if (opts.record_trace) sol.trace.push_back(op.objective(state.alpha, state.active));
    }

    if (!sol.converged) last_kkt = kkt_check(state, op, tol, &rejected);
    sol.alpha = std::move(state.alpha);
    sol.objective = op.objective(sol.alpha, state.active);
    sol.kkt_violation = last_kkt.violation;
    sol.iterations = state.iter;
    return sol;
}

enum class GramMode { Explicit, Implicit };

/// Convenience entry point taking Z and x directly.
template <typename Scalar>
SimplexSolution<Scalar> solve_simplex_ls(const MatrixX<Scalar>& Z,
                                         VectorRef<Scalar> x,
                                         const SolverOptions& opts = {},
                                         GramMode mode = GramMode::Explicit) {
    require_finite(Z, "solve_simplex_ls: Z");
    require_finite(x, "solve_simplex_ls: x");
    if (Z.rows() != x.size()) throw DimensionError("solve_simplex_ls: x does not match Z rows");
    if (mode == GramMode::Explicit) return solve(ExplicitGram<Scalar>::from_data(Z, x), opts);
    return solve(ImplicitGram<Scalar>(Z, x), opts);
}

}  // namespace aa
