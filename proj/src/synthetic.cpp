#include "aa/synthetic.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "aa/error.hpp"

namespace aa::synthetic {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd dirichlet(Index k, double concentration, std::mt19937_64& rng) {
    std::gamma_distribution<double> G(concentration, 1.0);
    VectorXd w(k);
    do {
        for (Index i = 0; i < k; ++i) w[i] = G(rng);
    } while (!(w.sum() > 0));
    return w / w.sum();
}

}  // namespace

PlantedMixture planted_mixture(Index m, Index n, Index p, std::uint64_t seed) {
    if (m < 1 || n < 1 || p < 1) throw ParameterError("planted_mixture: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    PlantedMixture out;
    out.vertices.resize(m, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < m; ++i) out.vertices(i, j) = U(rng);
    out.X.resize(m, n);
    for (Index i = 0; i < n; ++i) out.X.col(i) = out.vertices * dirichlet(p, 1.0, rng);
    return out;
}

Triangle triangle(std::uint64_t seed, bool outlier) {
    constexpr double side = 20.0;
    constexpr Index points = 60;
    Triangle out;
    out.vertices.resize(2, 3);
    out.vertices << 0.0, side, side / 2, 0.0, 0.0, side * std::sqrt(3.0) / 2;
    std::mt19937_64 rng(seed);
    out.X.resize(2, outlier ? points + 1 : points);
    out.X.leftCols(3) = out.vertices;
    for (Index i = 3; i < points; ++i) out.X.col(i) = out.vertices * dirichlet(3, 0.1, rng);
    if (outlier) {
        VectorXd o = (out.vertices.col(0) + out.vertices.col(1)) / 2;
        o[1] -= 100.0;
        out.X.col(points) = o;
    }
    return out;
}

double vertex_distance(const MatrixXd& Z, const MatrixXd& vertices) {
    double worst = 0.0;
    for (Index k = 0; k < vertices.cols(); ++k) {
        double best = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < Z.cols(); ++j)
            best = std::min(best, (Z.col(j) - vertices.col(k)).norm());
        worst = std::max(worst, best);
    }
    return worst;
}

LabeledSet polytope_classes(Index m, int classes, Index corners, Index per_class,
                            std::uint64_t seed) {
    if (m < 1 || classes < 1 || corners < 1 || per_class < 1)
        throw ParameterError("polytope_classes: sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    LabeledSet out;
    out.X.resize(m, Index(classes) * per_class);
    out.labels.reserve(std::size_t(out.X.cols()));
    Index col = 0;
    for (int k = 0; k < classes; ++k) {
        VectorXd center(m);
        for (Index i = 0; i < m; ++i) center[i] = N(rng);
        MatrixXd V(m, corners);
        for (Index j = 0; j < corners; ++j)
            for (Index i = 0; i < m; ++i) V(i, j) = center[i] + 0.6 * N(rng);
        for (Index s = 0; s < per_class; ++s, ++col) {
            out.X.col(col) = V * dirichlet(corners, 0.3, rng);
            for (Index i = 0; i < m; ++i) out.X(i, col) += 0.02 * N(rng);
            out.labels.push_back(k);
        }
    }
    return out;
}

}  // namespace aa::synthetic
