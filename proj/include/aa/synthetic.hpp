#pragma once

// Seeded data generators for benchmarks, tests and demos. Columns are points.

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace aa::synthetic {

/// p vertices drawn uniformly from [0,1]^m; each of the n points is a Dirichlet(1)
/// combination of them.
struct PlantedMixture {
    Eigen::MatrixXd X;         // m x n
    Eigen::MatrixXd vertices;  // m x p
};
PlantedMixture planted_mixture(Eigen::Index m, Eigen::Index n, Eigen::Index p,
                               std::uint64_t seed);

/// Triangle of side 20 in the plane: its 3 vertices plus 57 points drawn with
/// Dirichlet(0.1) weights. With `outlier`, a 61st point sits 100 below the midpoint of the
/// bottom edge.
struct Triangle {
    Eigen::MatrixXd X;         // 2 x 60 or 2 x 61
    Eigen::MatrixXd vertices;  // 2 x 3
};
Triangle triangle(std::uint64_t seed, bool outlier);

/// Largest distance from a true vertex to its nearest column of Z.
double vertex_distance(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& vertices);

struct LabeledSet {
    Eigen::MatrixXd X;  // m x n
    std::vector<int> labels;
};

/// `classes` groups of points in R^m. Class k owns `corners` vertices scattered around its
/// own center; its points are sparse Dirichlet(0.3) combinations of them plus small noise.
LabeledSet polytope_classes(Eigen::Index m, int classes, Eigen::Index corners,
                            Eigen::Index per_class, std::uint64_t seed);

}  // namespace aa::synthetic
