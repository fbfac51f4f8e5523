#include <doctest.h>

#include <cmath>
#include <random>

#include "aa/archetypal.hpp"
#include "aa/numcore.hpp"
#include "oracles.hpp"

using namespace aa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// 1/2 min_{w >= eps} (u^2/w + w). The function is convex in w with unconstrained
// minimizer |u|, so only w = eps and w = |u| (when admissible) can be optimal. A coarse
// scan confirms nothing beats them.
double variational_huber(double u, double eps) {
    auto f = [u](double w) { return 0.5 * (u * u / w + w); };
    double best = f(eps);
    if (std::abs(u) >= eps) best = std::min(best, f(std::abs(u)));
    for (int k = 0; k <= 4000; ++k) {
        const double w = eps * std::pow(10.0, k / 1000.0);
        REQUIRE(f(w) >= best - 1e-15);
    }
    return best;
}

double entrywise_frobenius(const MatrixXd& X, const MatrixXd& B, const MatrixXd& A) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            double approx = 0.0;
            for (Eigen::Index k = 0; k < B.cols(); ++k) {
                double z = 0.0;
                for (Eigen::Index l = 0; l < X.cols(); ++l) z += X(i, l) * B(l, k);
                approx += z * A(k, j);
            }
            total += (X(i, j) - approx) * (X(i, j) - approx);
        }
    return total;
}

}  // namespace

TEST_CASE("huber branch values") {
    CHECK(huber(0.0, 0.01) == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(huber(0.01, 0.01) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(huber(1.0, 0.01) == 1.0);
    CHECK(huber(-1.0, 0.01) == 1.0);
    CHECK_THROWS_AS(huber(1.0, 0.0), ParameterError);
    CHECK_THROWS_AS(huber(1.0, -0.5), ParameterError);
}

TEST_CASE("huber equals its variational form on the grid") {
    for (double eps : {1e-3, 1e-2, 1e-1}) {
        for (double scale : {0.0, 0.5, 1.0, 2.0, 10.0}) {
            const double u = scale * eps;
            CHECK(std::abs(huber(u, eps) - variational_huber(u, eps)) <= 1e-12);
            CHECK(std::abs(huber(-u, eps) - variational_huber(-u, eps)) <= 1e-12);
        }
    }
}

TEST_CASE("huber is continuous with matching one-sided slopes at the threshold") {
    for (double eps : {1e-3, 1e-2, 1e-1}) {
        const double h = eps * 1e-6;
        CHECK(std::abs(huber(eps - h, eps) - huber(eps + h, eps)) <= 3 * h);
        const double left = (huber(eps, eps) - huber(eps - h, eps)) / h;
        const double right = (huber(eps + h, eps) - huber(eps, eps)) / h;
        CHECK(left == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(right == doctest::Approx(1.0).epsilon(1e-9));
        const double nleft = (huber(-eps, eps) - huber(-eps - h, eps)) / h;
        const double nright = (huber(-eps + h, eps) - huber(-eps, eps)) / h;
        CHECK(nleft == doctest::Approx(-1.0).epsilon(1e-9));
        CHECK(nright == doctest::Approx(-1.0).epsilon(1e-5));
    }
}

TEST_CASE("frobenius objective") {
    SUBCASE("exact reconstruction") {
        std::mt19937_64 rng(3);
        const MatrixXd X = oracle::gaussian(4, 6, rng);
        const MatrixXd I = MatrixXd::Identity(6, 6);
        CHECK(frobenius_objective(X, I, I) == 0.0);
    }
    SUBCASE("scalar") {
        MatrixXd X(1, 1), B(1, 1), A(1, 1);
        X << 2;
        B << 1;
        A << 0.5;
        CHECK(frobenius_objective(X, B, A) == 1.0);
    }
    SUBCASE("random instances match an entrywise recompute") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            const MatrixXd X = oracle::gaussian(5, 8, rng);
            const MatrixXd B = oracle::random_simplex_columns(8, 3, rng);
            const MatrixXd A = oracle::random_simplex_columns(3, 8, rng);
            const double ref = entrywise_frobenius(X, B, A);
            CHECK(std::abs(frobenius_objective(X, B, A) - ref) <= 1e-12 * std::max(1.0, ref));
            const double c = 3.7;
            const MatrixXd cX = c * X;
            CHECK(frobenius_objective(cX, B, A) ==
                  doctest::Approx(c * c * frobenius_objective(X, B, A)).epsilon(1e-12));
        }
    }
    SUBCASE("shape mismatch") {
        const MatrixXd X = MatrixXd::Ones(2, 3);
        CHECK_THROWS_AS(frobenius_objective<double>(X, MatrixXd::Ones(2, 1), MatrixXd::Ones(1, 3)),
                        DimensionError);
        CHECK_THROWS_AS(frobenius_objective<double>(X, MatrixXd::Ones(3, 1), MatrixXd::Ones(2, 3)),
                        DimensionError);
    }
}

TEST_CASE("robust objective") {
    SUBCASE("exact reconstruction gives n eps / 2") {
        std::mt19937_64 rng(5);
        const MatrixXd X = oracle::gaussian(3, 7, rng);
        const MatrixXd I = MatrixXd::Identity(7, 7);
        CHECK(robust_objective(X, I, I, 0.01) == doctest::Approx(7 * 0.005).epsilon(1e-14));
    }
    SUBCASE("one column off by one") {
        // Column 2 reconstructs as column 0, at distance 1.
        MatrixXd X(2, 3);
        X << 0, 5, 1, 0, 0, 0;
        const MatrixXd B = MatrixXd::Identity(3, 3);
        MatrixXd A = MatrixXd::Identity(3, 3);
        A.col(2) << 1, 0, 0;
        CHECK(robust_objective(X, B, A, 0.01) == doctest::Approx(1.0 + 2 * 0.005).epsilon(1e-14));
    }
    SUBCASE("random instances match a per-column recompute") {
        std::mt19937_64 rng(17);
        for (int trial = 0; trial < 20; ++trial) {
            const MatrixXd X = oracle::gaussian(4, 9, rng);
            const MatrixXd B = oracle::random_simplex_columns(9, 3, rng);
            const MatrixXd A = oracle::random_simplex_columns(3, 9, rng);
            const double eps = trial % 2 ? 0.01 : 5.0;
            double ref = 0.0;
            for (Eigen::Index i = 0; i < X.cols(); ++i) {
                VectorXd r = X.col(i);
                for (Eigen::Index k = 0; k < 3; ++k) r -= A(k, i) * (X * B.col(k));
                const double u = r.norm();
                ref += u <= eps ? u * u / (2 * eps) + eps / 2 : u;
            }
            CHECK(std::abs(robust_objective(X, B, A, eps) - ref) <= 1e-12 * std::max(1.0, ref));
        }
    }
    SUBCASE("bad eps") {
        const MatrixXd I = MatrixXd::Identity(2, 2);
        CHECK_THROWS_AS(robust_objective(I, I, I, 0.0), ParameterError);
    }
}

TEST_CASE("validation helpers") {
    MatrixXd bad = MatrixXd::Ones(2, 2);
    CHECK_NOTHROW(require_finite(bad, "x"));
    bad(1, 0) = std::nan("");
    CHECK_THROWS_AS(require_finite(bad, "x"), DataError);
    bad(1, 0) = INFINITY;
    CHECK_THROWS_AS(require_finite(bad, "x"), DataError);
    CHECK_THROWS_AS(require_finite(MatrixXd(0, 3), "x"), DataError);

    VectorXd v(3);
    v << 0.2, 0.3, 0.5;
    CHECK(is_simplex(v));
    v[0] = -1e-15;
    CHECK_FALSE(is_simplex(v));
    v << 0.2, 0.3, 0.5 + 1e-9;
    CHECK_FALSE(is_simplex(v));

    MatrixXd m(3, 1);
    m << 0.5, 1e-14, 0.5 - 1e-14;
    sparsify_simplex_columns(m, 1e-12);
    CHECK(m(1, 0) == 0.0);
    CHECK(m.col(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("residual tracker") {
    std::mt19937_64 rng(23);
    const MatrixXd X = oracle::gaussian(6, 15, rng);
    const MatrixXd B = oracle::random_simplex_columns(15, 4, rng);
    const MatrixXd A = oracle::random_simplex_columns(4, 15, rng);
    MatrixXd Z = X * B;

    SUBCASE("construction computes X - ZA") {
        ResidualTracker<double> t(X, Z, A);
        CHECK((t.residual() - (X - Z * A)).norm() <= 1e-14 * X.norm());
        CHECK(t.staleness() == 0);
    }
    SUBCASE("no-op updates") {
        ResidualTracker<double> t(X, Z, A);
        const MatrixXd before = t.residual();
        t.apply_beta_update(Z.col(0), Z.col(0), A.row(0));
        CHECK(t.residual() == before);
        t.apply_beta_update(Z.col(0), X.col(3), Eigen::RowVectorXd::Zero(15));
        CHECK(t.residual() == before);
        CHECK(t.staleness() == 2);
    }
    SUBCASE("full beta sweep matches a fresh residual") {
        ResidualTracker<double> t(X, Z, A);
        MatrixXd Bcur = B;
        for (Eigen::Index j = 0; j < 4; ++j) {
            const auto sol = update_beta_column<double>(t.residual(), A.row(j), Z.col(j), X);
            REQUIRE(sol);
            Bcur.col(j) = sol->alpha;
            const VectorXd z_new = X * sol->alpha;
            t.apply_beta_update(Z.col(j), z_new, A.row(j));
            Z.col(j) = z_new;
        }
        CHECK((t.residual() - (X - X * Bcur * A)).norm() <= 1e-8 * X.norm());
    }
    SUBCASE("drift after 20 outer iterations of rank-one updates only") {
        MatrixXd Acur = A;
        ResidualTracker<double> t(X, Z, Acur);
        for (int it = 0; it < 20; ++it) {
            for (Eigen::Index j = 0; j < 4; ++j) {
                const auto sol = update_beta_column<double>(t.residual(), Acur.row(j), Z.col(j), X);
                REQUIRE(sol);
                const VectorXd z_new = X * sol->alpha;
                t.apply_beta_update(Z.col(j), z_new, Acur.row(j));
                Z.col(j) = z_new;
            }
        }
        CHECK(t.staleness() == 80);
        CHECK((t.residual() - (X - Z * Acur)).norm() / X.norm() <= 1e-8);
    }
    SUBCASE("refresh policy") {
        ResidualTracker<double> t(X, Z, A);
        CHECK_FALSE(t.needs_refresh(1, 4));
        CHECK(t.needs_refresh(25, 4));
        CHECK(t.needs_refresh(50, 4));
        for (int k = 0; k < 41; ++k) t.apply_beta_update(Z.col(0), Z.col(0), A.row(0));
        CHECK(t.needs_refresh(3, 4));
        t.refresh(X, Z, A);
        CHECK_FALSE(t.needs_refresh(3, 4));
    }
    SUBCASE("shape errors") {
        ResidualTracker<double> t(X, Z, A);
        CHECK_THROWS_AS(t.apply_beta_update(Z.col(0), X.col(0).head(3), A.row(0)), DimensionError);
        CHECK_THROWS_AS(t.refresh(X, Z.leftCols(3), A), DimensionError);
    }
}
