#include "aa/classifier.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "aa/error.hpp"
#include "aa/model_io.hpp"

namespace aa {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::ordered_json;

MatrixXd normalize_columns(const MatrixXd& X) {
    MatrixXd out = X;
    for (Index j = 0; j < out.cols(); ++j) {
        const double norm = out.col(j).norm();
        if (norm > 0) out.col(j) /= norm;
    }
    return out;
}

ClassifierModel train_classifier(const std::vector<std::string>& labels,
                                 const std::vector<MatrixXd>& classes,
                                 const ClassifierOptions& options) {
    if (labels.size() != classes.size()) {
        throw DimensionError("train_classifier: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(classes.size()) + " classes");
    }
    if (classes.size() < 2) throw DataError("train_classifier: need at least two classes");
    const Index m = classes.front().rows();
    for (std::size_t k = 0; k < classes.size(); ++k) {
        if (classes[k].cols() == 0) throw DataError("class '" + labels[k] + "' has no points");
        if (classes[k].rows() != m) {
            throw DimensionError("class '" + labels[k] + "' has dimension " +
                                 std::to_string(classes[k].rows()) + ", expected " +
                                 std::to_string(m));
        }
        require_finite(classes[k], "train_classifier");
    }

    ClassifierModel model;
    model.labels = labels;
    model.mode = options.mode;
    model.normalize = options.normalize;
    model.tol = options.tol;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        MatrixXd X = options.normalize ? normalize_columns(classes[k]) : classes[k];
        if (options.mode == ClassifierMode::AllPoints) {
            model.archetypes.push_back(std::move(X));
            continue;
        }
        if (options.p > X.cols()) {
            throw ParameterError("class '" + labels[k] + "' has " + std::to_string(X.cols()) +
                                 " points, fewer than p = " + std::to_string(options.p));
        }
        FitConfig<double> cfg;
        cfg.p = options.p;
        cfg.iterations = options.iterations;
        cfg.seed = options.seed + k;
        cfg.tol = options.tol;
        cfg.robust = options.robust;
        cfg.epsilon = options.epsilon;
        cfg.threads = options.threads;
        model.archetypes.push_back(fit(X, cfg).Z);
    }
    return model;
}

ClassifierModel train_classifier(const MatrixXd& X, const std::vector<int>& labels,
                                 const ClassifierOptions& options) {
    if (Index(labels.size()) != X.cols()) {
        throw DimensionError("train_classifier: one label per column required");
    }
    std::map<int, std::vector<Index>> members;
    for (Index i = 0; i < X.cols(); ++i) members[labels[std::size_t(i)]].push_back(i);
    std::vector<std::string> names;
    std::vector<MatrixXd> classes;
    for (const auto& [label, idx] : members) {
        names.push_back(std::to_string(label));
        MatrixXd C(X.rows(), Index(idx.size()));
        for (std::size_t c = 0; c < idx.size(); ++c) C.col(Index(c)) = X.col(idx[c]);
        classes.push_back(std::move(C));
    }
    return train_classifier(names, classes, options);
}

namespace {

struct PreparedClass {
    std::shared_ptr<const MatrixXd> gram;
    const MatrixXd* Z;
};

std::vector<PreparedClass> prepare(const ClassifierModel& model) {
    std::vector<PreparedClass> out;
    for (const auto& Z : model.archetypes) out.push_back({detail::shared_gram(Z), &Z});
    return out;
}

Prediction classify_prepared(const ClassifierModel& model, const std::vector<PreparedClass>& prep,
                             const VectorXd& query) {
    if (query.size() != model.dimension()) {
        throw DimensionError("classify: query has dimension " + std::to_string(query.size()) +
                             ", model expects " + std::to_string(model.dimension()));
    }
    const VectorXd x = model.normalize && query.norm() > 0 ? VectorXd(query / query.norm()) : query;
    SolverOptions opts;
    opts.tol = model.tol;
    Prediction out;
    out.residuals.resize(Index(prep.size()));
    for (std::size_t k = 0; k < prep.size(); ++k) {
        const ExplicitGram<double> op(prep[k].gram, prep[k].Z->transpose() * x, x.squaredNorm(),
                                      x.size());
        const auto sol = solve(op, opts);
        out.residuals[Index(k)] = (x - *prep[k].Z * sol.alpha).squaredNorm();
    }
    Index best = 0;
    out.residuals.minCoeff(&best);
    out.label_index = std::size_t(best);
    return out;
}

}  // namespace

Prediction classify(const ClassifierModel& model, const VectorXd& x) {
    require_finite(x, "classify");
    return classify_prepared(model, prepare(model), x);
}

std::vector<Prediction> classify_batch(const ClassifierModel& model, const MatrixXd& X,
                                       unsigned threads) {
    require_finite(X, "classify");
    if (X.rows() != model.dimension()) {
        throw DimensionError("classify: queries have dimension " + std::to_string(X.rows()) +
                             ", model expects " + std::to_string(model.dimension()));
    }
    const auto prep = prepare(model);
    std::vector<Prediction> out(std::size_t(X.cols()));
    detail::parallel_for(X.cols(), threads, [&](Index i) {
        out[std::size_t(i)] = classify_prepared(model, prep, X.col(i));
    });
    return out;
}

std::string classifier_to_json(const ClassifierModel& model) {
    json doc;
    doc["format"] = "aa-classifier";
    doc["version"] = io::kModelVersion;
    doc["mode"] = model.mode == ClassifierMode::Learned ? "learned" : "all";
    doc["normalize"] = model.normalize;
    doc["tol"] = model.tol;
    doc["m"] = model.dimension();
    json classes = json::array();
    for (std::size_t k = 0; k < model.labels.size(); ++k) {
        const MatrixXd& Z = model.archetypes[k];
        json cols = json::array();
        for (Index j = 0; j < Z.cols(); ++j)
            cols.push_back(std::vector<double>(Z.col(j).begin(), Z.col(j).end()));
        classes.push_back({{"label", model.labels[k]}, {"archetypes", std::move(cols)}});
    }
    doc["classes"] = std::move(classes);
    return io::format_document(doc);
}

ClassifierModel classifier_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("format") != "aa-classifier") throw FormatError("not a classifier file");
        if (doc.at("version").get<std::uint32_t>() != io::kModelVersion) {
            throw FormatError("unsupported classifier version");
        }
        ClassifierModel model;
        const auto mode = doc.at("mode").get<std::string>();
        if (mode != "learned" && mode != "all") throw FormatError("unknown classifier mode");
        model.mode = mode == "learned" ? ClassifierMode::Learned : ClassifierMode::AllPoints;
        model.normalize = doc.at("normalize").get<bool>();
        model.tol = doc.at("tol").get<double>();
        const auto m = doc.at("m").get<Index>();
        for (const auto& c : doc.at("classes")) {
            model.labels.push_back(c.at("label").get<std::string>());
            const auto& cols = c.at("archetypes");
            MatrixXd Z(m, Index(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j) {
                const auto v = cols[j].get<std::vector<double>>();
                if (Index(v.size()) != m) throw FormatError("classifier: archetype dimension");
                Z.col(Index(j)) = Eigen::Map<const VectorXd>(v.data(), m);
            }
            if (Z.cols() == 0 || !all_finite(Z)) throw FormatError("classifier: bad archetypes");
            model.archetypes.push_back(std::move(Z));
        }
        if (model.labels.size() < 2) throw FormatError("classifier: fewer than two classes");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed classifier file: ") + e.what());
    }
}

void save_classifier(const std::filesystem::path& path, const ClassifierModel& model) {
    io::write_file(path, classifier_to_json(model));
}

ClassifierModel load_classifier(const std::filesystem::path& path) {
    return classifier_from_json(io::read_file(path));
}

}  // namespace aa
