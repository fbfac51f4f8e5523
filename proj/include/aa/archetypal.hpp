#pragma once

// Block-coordinate archetypal analysis: X ~ X B A with simplex columns in A (p x n) and
// B (n x p). Plain fitting minimizes ||X - XBA||_F^2; robust fitting minimizes
// sum_i huber(||x_i - XB alpha_i||, eps) through its reweighted form
//
//     1/2 sum_i ( ||x_i - XB alpha_i||^2 / w_i + w_i ),   w_i >= eps.

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "aa/error.hpp"
#include "aa/numcore.hpp"
#include "aa/simplex_qp.hpp"

namespace aa {

enum class InitMode { RandomColumns, ProvidedB };

template <typename Scalar>
struct FitConfig {
    Index p = 1;
    Index iterations = 100;
    std::uint64_t seed = 0;
    double tol = 1e-9;
    bool robust = false;
    /// Huber threshold; absolute, calibrated for l2-normalized columns.
    double epsilon = 0.01;
    /// Extension: replace epsilon by the 10th percentile of the first residual norms.
    bool auto_epsilon = false;
    InitMode init = InitMode::RandomColumns;
    MatrixX<Scalar> initial_B;
    /// Stop once an iteration lowers the objective by less than 1e-8 relative.
    bool early_stop = false;
    /// Worker threads for the alpha sweep and encode; 0 uses every core.
    unsigned threads = 1;

    void validate(Index n) const {
        if (p < 1 || p > n) {
            throw ParameterError("p must lie in [1, n] (p = " + std::to_string(p) +
                                 ", n = " + std::to_string(n) + ")");
        }
        if (iterations < 1) throw ParameterError("iterations must be >= 1");
        if (!(tol > 0)) throw ParameterError("tol must be positive");
        if (!(epsilon > 0)) throw ParameterError("epsilon must be positive");
        if (init == InitMode::ProvidedB) {
            if (initial_B.rows() != n || initial_B.cols() != p) {
                throw DimensionError("initial B must be n x p");
            }
            if (!columns_on_simplex(initial_B, 1e-10)) {
                throw ParameterError("initial B columns must lie on the simplex");
            }
        }
    }
};

/// Per-point robust weights; the beta update rescales point i by 1/w_i.
template <typename Scalar>
struct WeightVector {
    VectorX<Scalar> w;
    Scalar eps = Scalar(0);

    VectorX<Scalar> scaling() const { return w.cwiseInverse(); }
};

template <typename Scalar>
struct ArchetypeModel {
    MatrixX<Scalar> A;  // p x n
    MatrixX<Scalar> B;  // n x p
    MatrixX<Scalar> Z;  // m x p, equals XB
    /// Objective after each outer iteration: ||X - XBA||_F^2, or the reweighted robust
    /// objective for robust fits.
    std::vector<Scalar> history;
    /// ||X - XBA||_F^2 after each outer iteration, recorded for both kinds of fit.
    std::vector<Scalar> squared_error_history;
    /// Wall-clock seconds spent in each outer iteration.
    std::vector<double> iteration_seconds;
    std::optional<WeightVector<Scalar>> weights;
    FitConfig<Scalar> config;
    /// Every simplex QP solved during the fit met its KKT tolerance.
    bool converged = true;
    /// All columns of X coincide; the model is rank one.
    bool degenerate = false;
    Index dead_archetype_resets = 0;

    Index archetypes() const noexcept { return Z.cols(); }
};

/// max(residual_norm, eps): the minimizer of u^2/w + w over w >= eps.
template <typename Scalar>
Scalar huber_weight(Scalar residual_norm, Scalar eps) {
    if (!(eps > Scalar(0))) throw ParameterError("huber_weight: eps must be positive");
    return std::max(residual_norm, eps);
}

/// ||alpha^j||^2 at or below this marks archetype j as unused.
inline constexpr double kDeadUsage = 1e-24;

namespace detail {

template <typename F>
void parallel_for(Index count, unsigned threads, F&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = unsigned(std::min<Index>(threads, std::max<Index>(count, 1)));
    if (threads <= 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const Index chunk = (count + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const Index begin = Index(t) * chunk;
        const Index end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] {
            for (Index i = begin; i < end; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

template <typename Scalar>
std::shared_ptr<const MatrixX<Scalar>> shared_gram(const MatrixX<Scalar>& Z) {
    auto gram = std::make_shared<MatrixX<Scalar>>(Z.cols(), Z.cols());
    gram->template triangularView<Eigen::Lower>() = Z.transpose() * Z;
    *gram = gram->template selfadjointView<Eigen::Lower>();
    return gram;
}

/// Solves every column of X against Z into the columns of A. Returns true when all
/// solves converged.
template <typename Scalar>
bool alpha_sweep(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& X, MatrixX<Scalar>& A,
                 const SolverOptions& opts, unsigned threads) {
    const auto gram = shared_gram(Z);
    A.resize(Z.cols(), X.cols());
    std::vector<char> ok(std::size_t(X.cols()), 1);
    // Per-column products keep each code independent of the batch it was solved in.
    parallel_for(X.cols(), threads, [&](Index i) {
        const ExplicitGram<Scalar> op(gram, Z.transpose() * X.col(i), X.col(i).squaredNorm(),
                                      Z.rows());
        SimplexSolution<Scalar> sol = solve(op, opts);
        A.col(i) = sol.alpha;
        ok[std::size_t(i)] = sol.converged;
    });
    return std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
}

/// X * beta using only the nonzero entries of beta.
template <typename Scalar>
VectorX<Scalar> sparse_combination(const MatrixX<Scalar>& X, const VectorX<Scalar>& beta) {
    VectorX<Scalar> z = VectorX<Scalar>::Zero(X.rows());
    for (Index k = 0; k < beta.size(); ++k)
        if (beta[k] != Scalar(0)) z.noalias() += beta[k] * X.col(k);
    return z;
}

template <typename Scalar>
Scalar percentile(std::vector<Scalar> v, double q) {
    const std::size_t k = std::size_t(q * double(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(k), v.end());
    return v[k];
}

}  // namespace detail

/// p distinct column indices of an n-column matrix, drawn without replacement.
inline std::vector<Index> sample_columns(Index n, Index p, std::uint64_t seed) {
    if (p < 1 || p > n) throw ParameterError("sample_columns: need 1 <= p <= n");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index(0));
    std::mt19937_64 rng(seed);
    for (Index j = 0; j < p; ++j) {
        std::uniform_int_distribution<Index> pick(j, n - 1);
        std::swap(idx[std::size_t(j)], idx[std::size_t(pick(rng))]);
    }
    idx.resize(std::size_t(p));
    return idx;
}

/// argmin_{alpha in simplex} ||x - Z alpha||^2.
template <typename Scalar>
SimplexSolution<Scalar> update_alpha_column(const MatrixX<Scalar>& Z,
                                            VectorRef<Scalar> x,
                                            const SolverOptions& opts = {}) {
    return solve_simplex_ls(Z, x, opts, GramMode::Explicit);
}

/// Beta update for archetype j given the current residual R = X - ZA:
///     argmin_{beta in simplex} || R alpha^j^T / ||alpha^j||^2 + z_j - X beta ||^2 .
/// Returns nullopt when alpha^j is zero (archetype j is unused).
template <typename Scalar>
std::optional<SimplexSolution<Scalar>> update_beta_column(
    const MatrixX<Scalar>& R, RowVectorRef<Scalar> alpha_row,
    VectorRef<Scalar> z_j, const MatrixX<Scalar>& X,
    const SolverOptions& opts = {}, std::shared_ptr<const VectorX<Scalar>> col_sqnorms = nullptr) {
    if (R.rows() != X.rows() || R.cols() != X.cols() || alpha_row.size() != X.cols() ||
        z_j.size() != X.rows()) {
        throw DimensionError("update_beta_column: dimension mismatch");
    }
    const Scalar usage = alpha_row.squaredNorm();
    if (!(usage > Scalar(kDeadUsage))) return std::nullopt;
    const VectorX<Scalar> target = (R * alpha_row.transpose()) / usage + z_j;
    return solve(ImplicitGram<Scalar>(X, target, std::move(col_sqnorms)), opts);
}

/// Weighted beta update: residual of point i is rescaled by 1/w_i,
///     argmin_{beta in simplex} || R G alpha^j^T / (alpha^j G alpha^j^T) + z_j - X beta ||^2
/// with G = diag(w)^{-1}.
template <typename Scalar>
std::optional<SimplexSolution<Scalar>> update_beta_column_weighted(
    const MatrixX<Scalar>& R, RowVectorRef<Scalar> alpha_row,
    VectorRef<Scalar> z_j, const MatrixX<Scalar>& X,
    const WeightVector<Scalar>& weights, const SolverOptions& opts = {},
    std::shared_ptr<const VectorX<Scalar>> col_sqnorms = nullptr) {
    if (R.rows() != X.rows() || R.cols() != X.cols() || alpha_row.size() != X.cols() ||
        z_j.size() != X.rows() || weights.w.size() != X.cols()) {
        throw DimensionError("update_beta_column_weighted: dimension mismatch");
    }
    if (!(alpha_row.squaredNorm() > Scalar(kDeadUsage))) return std::nullopt;
    const RowVectorX<Scalar> scaled = alpha_row.cwiseQuotient(weights.w.transpose());
    const Scalar usage = scaled.dot(alpha_row);
    const VectorX<Scalar> target = (R * scaled.transpose()) / usage + z_j;
    return solve(ImplicitGram<Scalar>(X, target, std::move(col_sqnorms)), opts);
}

/// Encodes each column of Xnew on the simplex spanned by the columns of Z.
template <typename Scalar>
MatrixX<Scalar> encode(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xnew,
                       const SolverOptions& opts = {}, unsigned threads = 1) {
    require_finite(Z, "encode: Z");
    require_finite(Xnew, "encode: X");
    if (Xnew.rows() != Z.rows()) {
        throw DimensionError("encode: data has " + std::to_string(Xnew.rows()) +
                             " rows, archetypes have " + std::to_string(Z.rows()));
    }
    MatrixX<Scalar> A;
    detail::alpha_sweep(Z, Xnew, A, opts, threads);
    return A;
}

/// Reweighted objective 1/2 sum_i (||r_i||^2 / w_i + w_i).
template <typename Scalar>
Scalar reweighted_objective(const MatrixX<Scalar>& R, const WeightVector<Scalar>& weights) {
    const auto sq = R.colwise().squaredNorm().transpose().array();
    return Scalar(0.5) * (sq / weights.w.array() + weights.w.array()).sum();
}

namespace detail {

template <typename Scalar>
ArchetypeModel<Scalar> fit_impl(const MatrixX<Scalar>& X, const FitConfig<Scalar>& config,
                                bool robust) {
    require_finite(X, "fit: X");
    const Index n = X.cols();
    const Index p = config.p;
    config.validate(n);

    ArchetypeModel<Scalar> model;
    model.config = config;
    model.config.robust = robust;
    model.config.initial_B.resize(0, 0);

    if (config.init == InitMode::ProvidedB) {
        model.B = config.initial_B;
    } else {
        model.B = MatrixX<Scalar>::Zero(n, p);
        const auto idx = sample_columns(n, p, config.seed);
        for (Index j = 0; j < p; ++j) model.B(idx[std::size_t(j)], j) = Scalar(1);
    }
    model.Z = X * model.B;
    model.A = MatrixX<Scalar>::Zero(p, n);

    const Scalar xnorm = X.norm();
    model.degenerate =
        (X.colwise() - X.col(0)).cwiseAbs().maxCoeff() <= Scalar(kAbsoluteFloor) * std::max(xnorm, Scalar(1));

    SolverOptions opts;
    opts.tol = config.tol;
    const auto col_sqnorms =
        std::make_shared<const VectorX<Scalar>>(X.colwise().squaredNorm().transpose());

    Scalar eps = Scalar(config.epsilon);
    WeightVector<Scalar> weights{VectorX<Scalar>::Ones(n), eps};

    ResidualTracker<Scalar> tracker(X, model.Z, model.A);
    for (Index t = 1; t <= config.iterations; ++t) {
        const auto started = std::chrono::steady_clock::now();
        model.converged &= alpha_sweep(model.Z, X, model.A, opts, config.threads);
        tracker.refresh(X, model.Z, model.A);

        if (robust) {
            const VectorX<Scalar> norms = tracker.residual().colwise().norm().transpose();
            if (t == 1 && config.auto_epsilon) {
                const Scalar q = percentile(std::vector<Scalar>(norms.begin(), norms.end()), 0.1);
                if (q > Scalar(0)) eps = q;
                model.config.epsilon = double(eps);
            }
            weights.eps = eps;
            weights.w = norms.cwiseMax(eps);
        }

        for (Index j = 0; j < p; ++j) {
            if (tracker.staleness() > 10 * p) tracker.refresh(X, model.Z, model.A);
            const RowVectorX<Scalar> alpha_row = model.A.row(j);
            auto sol = robust ? update_beta_column_weighted(tracker.residual(), alpha_row,
                                                            model.Z.col(j), X, weights, opts,
                                                            col_sqnorms)
                              : update_beta_column(tracker.residual(), alpha_row,
                                                   model.Z.col(j), X, opts, col_sqnorms);
            VectorX<Scalar> z_new;
            if (sol) {
                model.converged &= sol->converged;
                model.B.col(j) = sol->alpha;
                z_new = sparse_combination(X, sol->alpha);
            } else {
                // Unused archetype: move it onto the worst-represented point.
                Index worst = 0;
                tracker.residual().colwise().squaredNorm().maxCoeff(&worst);
                model.B.col(j).setZero();
                model.B(worst, j) = Scalar(1);
                z_new = X.col(worst);
                ++model.dead_archetype_resets;
            }
            tracker.apply_beta_update(model.Z.col(j), z_new, alpha_row);
            model.Z.col(j) = z_new;
        }
        if (tracker.needs_refresh(t, p)) tracker.refresh(X, model.Z, model.A);

        const Scalar sq = tracker.residual().squaredNorm();
        model.squared_error_history.push_back(sq);
        model.history.push_back(robust ? reweighted_objective(tracker.residual(), weights) : sq);
        model.iteration_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());

        if (config.early_stop && model.history.size() >= 2) {
            const Scalar prev = model.history[model.history.size() - 2];
            const Scalar cur = model.history.back();
            if (prev - cur < Scalar(1e-8) * std::max(std::abs(prev), Scalar(kAbsoluteFloor))) break;
        }
    }

    sparsify_simplex_columns(model.A, Scalar(kAbsoluteFloor));
    sparsify_simplex_columns(model.B, Scalar(kAbsoluteFloor));
    model.Z = X * model.B;
    if (robust) model.weights = weights;
    return model;
}

}  // namespace detail

/// Plain archetypal analysis; dispatches to fit_robust when config.robust is set.
template <typename Scalar>
ArchetypeModel<Scalar> fit(const MatrixX<Scalar>& X, const FitConfig<Scalar>& config) {
    return detail::fit_impl(X, config, config.robust);
}

/// Huber-robust archetypal analysis by iterative reweighting.
template <typename Scalar>
ArchetypeModel<Scalar> fit_robust(const MatrixX<Scalar>& X, const FitConfig<Scalar>& config) {
    return detail::fit_impl(X, config, true);
}

}  // namespace aa
