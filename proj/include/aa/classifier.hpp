#pragma once

// Nearest-hull classification: a query goes to the class whose archetype hull it is
// closest to in squared Euclidean distance.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "aa/archetypal.hpp"
#include "aa/simplex_qp.hpp"

namespace aa {

enum class ClassifierMode {
    /// p archetypes learned per class.
    Learned,
    /// Every training point of a class is an archetype.
    AllPoints,
};

struct ClassifierOptions {
    ClassifierMode mode = ClassifierMode::Learned;
    Index p = 5;
    Index iterations = 100;
    /// Class k is fitted with seed + k.
    std::uint64_t seed = 0;
    double tol = 1e-9;
    bool robust = false;
    double epsilon = 0.01;
    /// Scale training and query columns to unit l2 norm.
    bool normalize = true;
    unsigned threads = 1;
};

struct ClassifierModel {
    std::vector<std::string> labels;
    /// One m x p_k matrix per class.
    std::vector<Eigen::MatrixXd> archetypes;
    ClassifierMode mode = ClassifierMode::Learned;
    bool normalize = true;
    double tol = 1e-9;

    Index dimension() const { return archetypes.empty() ? 0 : archetypes.front().rows(); }
};

struct Prediction {
    std::size_t label_index = 0;
    /// Squared distance from the query to each class hull.
    Eigen::VectorXd residuals;
};

/// Trains on one m x n_k matrix per class. Needs at least two classes.
ClassifierModel train_classifier(const std::vector<std::string>& labels,
                                 const std::vector<Eigen::MatrixXd>& classes,
                                 const ClassifierOptions& options);

/// Same, from a labeled point set; labels are sorted and become the class names.
ClassifierModel train_classifier(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                                 const ClassifierOptions& options);

/// Nearest hull; ties go to the class listed first.
Prediction classify(const ClassifierModel& model, const Eigen::VectorXd& x);

std::vector<Prediction> classify_batch(const ClassifierModel& model, const Eigen::MatrixXd& X,
                                       unsigned threads = 1);

/// Unit-l2 columns; zero columns are left alone.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& X);

std::string classifier_to_json(const ClassifierModel& model);
ClassifierModel classifier_from_json(const std::string& text);
void save_classifier(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_classifier(const std::filesystem::path& path);

}  // namespace aa
