#include "aa/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "aa/archetypal.hpp"
#include "aa/bench.hpp"
#include "aa/classifier.hpp"
#include "aa/error.hpp"
#include "aa/model_io.hpp"

namespace aa::cli {

namespace fs = std::filesystem;
using Eigen::MatrixXd;

namespace {

struct DataFlags {
    char delimiter = ',';
    bool transpose = false;

    void add(CLI::App& cmd) {
        cmd.add_option("--delimiter", delimiter, "Field separator for text input")
            ->capture_default_str();
        cmd.add_flag("--transpose", transpose, "Text input has one point per row");
    }
    MatrixXd load(const fs::path& path) const { return io::load_data(path, delimiter, transpose); }
};

bool is_text_path(const fs::path& path) {
    const auto ext = path.extension().string();
    return ext == ".csv" || ext == ".txt" || ext == ".tsv";
}

void write_matrix(const fs::path& path, const MatrixXd& m, char delimiter) {
    if (is_text_path(path))
        io::export_delimited_text(path, m, path.extension() == ".tsv" ? '\t' : delimiter);
    else
        io::save_matrix(path, m);
}

std::string format_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

struct FitFlags {
    DataFlags data;
    std::string input, output_model, output_codes, history;
    Index p = 0, iterations = 100;
    bool robust = false, auto_epsilon = false, early_stop = false, no_z = false;
    double epsilon = 0.01, tol = 1e-9;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

int cmd_fit(const FitFlags& f, std::ostream& out) {
    const MatrixXd X = f.data.load(f.input);
    FitConfig<double> cfg;
    cfg.p = f.p;
    cfg.iterations = f.iterations;
    cfg.robust = f.robust;
    cfg.epsilon = f.epsilon;
    cfg.auto_epsilon = f.auto_epsilon;
    cfg.early_stop = f.early_stop;
    cfg.seed = f.seed;
    cfg.tol = f.tol;
    cfg.threads = f.threads;
    const auto model = fit(X, cfg);

    if (!f.output_model.empty()) io::save_model(f.output_model, model, !f.no_z);
    if (!f.output_codes.empty()) write_matrix(f.output_codes, model.A, f.data.delimiter);
    if (!f.history.empty()) {
        std::string text;
        for (double h : model.history) text += format_double(h) + "\n";
        io::write_file(f.history, text);
    }
    out << "points\t" << X.cols() << "\n"
        << "dimensions\t" << X.rows() << "\n"
        << "archetypes\t" << model.archetypes() << "\n"
        << "iterations\t" << model.history.size() << "\n"
        << "objective\t" << format_double(model.history.back()) << "\n"
        << "converged\t" << (model.converged ? "yes" : "no") << "\n";
    if (model.degenerate) out << "degenerate\tyes\n";
    return kExitOk;
}

struct EncodeFlags {
    DataFlags data;
    std::string model, input, output_codes;
    double tol = 1e-9;
    unsigned threads = 0;
};

int cmd_encode(const EncodeFlags& f, std::ostream& out) {
    const auto model = io::load_model(f.model);
    if (model.Z.cols() == 0) throw FormatError("model file has no stored archetypes (Z)");
    const MatrixXd X = f.data.load(f.input);
    SolverOptions opts;
    opts.tol = f.tol;
    const MatrixXd A = encode(model.Z, X, opts, f.threads);
    write_matrix(f.output_codes, A, f.data.delimiter);
    out << "encoded\t" << A.cols() << "\n";
    return kExitOk;
}

struct ClassifyFlags {
    DataFlags data;
    std::string train_dir, model, test, labels, save_model;
    Index p = 5, iterations = 100;
    bool all = false, no_normalize = false, robust = false;
    double epsilon = 0.01, tol = 1e-9;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

std::vector<std::string> read_labels(const fs::path& path) {
    std::istringstream in(io::read_file(path));
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) labels.push_back(line);
    }
    return labels;
}

ClassifierModel train_from_dir(const ClassifyFlags& f) {
    if (!fs::is_directory(f.train_dir)) {
        throw IoError("training directory '" + f.train_dir + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(f.train_dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<std::string> names;
    std::vector<MatrixXd> classes;
    for (const auto& path : files) {
        names.push_back(path.stem().string());
        classes.push_back(f.data.load(path));
    }
    ClassifierOptions opts;
    opts.mode = f.all ? ClassifierMode::AllPoints : ClassifierMode::Learned;
    opts.p = f.p;
    opts.iterations = f.iterations;
    opts.seed = f.seed;
    opts.tol = f.tol;
    opts.robust = f.robust;
    opts.epsilon = f.epsilon;
    opts.normalize = !f.no_normalize;
    opts.threads = f.threads;
    return train_classifier(names, classes, opts);
}

int cmd_classify(const ClassifyFlags& f, std::ostream& out) {
    const ClassifierModel model = f.model.empty() ? train_from_dir(f) : load_classifier(f.model);
    if (!f.save_model.empty()) save_classifier(f.save_model, model);
    const MatrixXd X = f.data.load(f.test);
    std::vector<std::string> truth;
    if (!f.labels.empty()) {
        truth = read_labels(f.labels);
        if (Index(truth.size()) != X.cols()) {
            throw DimensionError("labels file has " + std::to_string(truth.size()) +
                                 " entries for " + std::to_string(X.cols()) + " test points");
        }
    }
    const auto predictions = classify_batch(model, X, f.threads);
    out << "index\tlabel";
    for (const auto& name : model.labels) out << '\t' << name;
    out << '\n';
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& pr = predictions[i];
        const auto& label = model.labels[pr.label_index];
        out << i << '\t' << label;
        for (Index k = 0; k < pr.residuals.size(); ++k) out << '\t' << format_double(pr.residuals[k]);
        out << '\n';
        if (!truth.empty() && truth[i] != label) ++wrong;
    }
    if (!truth.empty()) {
        out << "error_rate\t" << format_double(double(wrong) / double(predictions.size())) << '\n';
    }
    return kExitOk;
}

struct BenchFlags {
    std::vector<Index> n_list{1000, 2000, 4000}, p_list{16};
    Index m = 784, iterations = 6;
    std::uint64_t seed = 0;
    int reps = 3;
    unsigned threads = 0;
    std::string output;
};

int cmd_bench(const BenchFlags& f, std::ostream& out) {
    bench::Options opts;
    opts.n_values = f.n_list;
    opts.p_values = f.p_list;
    opts.m = f.m;
    opts.seed = f.seed;
    opts.reps = f.reps;
    opts.iterations = f.iterations;
    opts.threads = f.threads;
    const auto rows = bench::run(opts);
    if (f.output.empty()) {
        bench::write_table(out, rows);
    } else {
        std::ostringstream table;
        bench::write_table(table, rows);
        io::write_file(f.output, table.str());
    }
    return kExitOk;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Archetypal analysis: fit, encode, classify, bench", "aa"};
    app.require_subcommand(1);

    FitFlags fit_flags;
    auto* fit_cmd = app.add_subcommand("fit", "Fit archetypes to a data matrix");
    fit_cmd->add_option("--input", fit_flags.input, "Binary matrix or delimited text")->required();
    fit_cmd->add_option("-p,--archetypes", fit_flags.p, "Number of archetypes")->required();
    fit_cmd->add_option("-t,--iterations", fit_flags.iterations, "Outer iterations")->capture_default_str();
    fit_cmd->add_flag("--robust", fit_flags.robust, "Huber-robust fit");
    fit_cmd->add_option("--epsilon", fit_flags.epsilon, "Huber threshold")->capture_default_str();
    fit_cmd->add_flag("--auto-epsilon", fit_flags.auto_epsilon,
                      "Use the 10th percentile of the first residual norms as epsilon");
    fit_cmd->add_option("--seed", fit_flags.seed, "Random seed")->capture_default_str();
    fit_cmd->add_option("--tol", fit_flags.tol, "Solver KKT tolerance")->capture_default_str();
    fit_cmd->add_flag("--early-stop", fit_flags.early_stop, "Stop when progress stalls");
    fit_cmd->add_option("--output-model", fit_flags.output_model, "Model file to write");
    fit_cmd->add_flag("--no-z", fit_flags.no_z, "Omit dense archetypes from the model file");
    fit_cmd->add_option("--output-codes", fit_flags.output_codes, "Write A (.csv/.txt/.tsv as text)");
    fit_cmd->add_option("--history", fit_flags.history, "Write the objective history");
    fit_cmd->add_option("--threads", fit_flags.threads, "Worker threads, 0 = all cores")->capture_default_str();
    fit_flags.data.add(*fit_cmd);

    EncodeFlags enc_flags;
    auto* enc_cmd = app.add_subcommand("encode", "Encode new data on a fitted model's archetypes");
    enc_cmd->add_option("--model", enc_flags.model, "Model file")->required();
    enc_cmd->add_option("--input", enc_flags.input, "Data to encode")->required();
    enc_cmd->add_option("--output-codes", enc_flags.output_codes, "Codes file to write")->required();
    enc_cmd->add_option("--tol", enc_flags.tol, "Solver KKT tolerance")->capture_default_str();
    enc_cmd->add_option("--threads", enc_flags.threads, "Worker threads, 0 = all cores")->capture_default_str();
    enc_flags.data.add(*enc_cmd);

    ClassifyFlags cls_flags;
    auto* cls_cmd = app.add_subcommand("classify", "Nearest archetype-hull classification");
    auto* train_opt = cls_cmd->add_option("--train-dir", cls_flags.train_dir,
                                          "Directory with one matrix file per class");
    auto* model_opt = cls_cmd->add_option("--model", cls_flags.model, "Saved classifier");
    train_opt->excludes(model_opt);
    cls_cmd->add_option("--test", cls_flags.test, "Points to classify")->required();
    cls_cmd->add_option("--labels", cls_flags.labels, "True labels, one per line");
    auto* p_opt = cls_cmd->add_option("-p,--archetypes", cls_flags.p, "Archetypes per class")
                      ->capture_default_str();
    cls_cmd->add_flag("--all", cls_flags.all, "Use every training point as an archetype")
        ->excludes(p_opt);
    cls_cmd->add_option("-t,--iterations", cls_flags.iterations, "Outer iterations")->capture_default_str();
    cls_cmd->add_flag("--robust", cls_flags.robust, "Huber-robust per-class fits");
    cls_cmd->add_option("--epsilon", cls_flags.epsilon, "Huber threshold")->capture_default_str();
    cls_cmd->add_option("--seed", cls_flags.seed, "Seed; class k uses seed + k")->capture_default_str();
    cls_cmd->add_option("--tol", cls_flags.tol, "Solver KKT tolerance")->capture_default_str();
    cls_cmd->add_flag("--no-normalize", cls_flags.no_normalize, "Keep raw column scale");
    cls_cmd->add_option("--save-model", cls_flags.save_model, "Write the trained classifier");
    cls_cmd->add_option("--threads", cls_flags.threads, "Worker threads, 0 = all cores")->capture_default_str();
    cls_flags.data.add(*cls_cmd);

    BenchFlags bench_flags;
    auto* bench_cmd = app.add_subcommand("bench", "Per-iteration timing on planted data");
    bench_cmd->add_option("--n-list", bench_flags.n_list, "Point counts")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--p-list", bench_flags.p_list, "Archetype counts")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--m", bench_flags.m, "Dimension")->capture_default_str();
    bench_cmd->add_option("--seed", bench_flags.seed, "Data and init seed")->capture_default_str();
    bench_cmd->add_option("--reps", bench_flags.reps, "Repetitions per cell")->capture_default_str();
    bench_cmd->add_option("-t,--iterations", bench_flags.iterations,
                          "Outer iterations per run, the first untimed")->capture_default_str();
    bench_cmd->add_option("--threads", bench_flags.threads, "Worker threads, 0 = all cores")->capture_default_str();
    bench_cmd->add_option("--output", bench_flags.output, "Write the table here instead of stdout");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "aa: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit_flags, out);
        if (*enc_cmd) return cmd_encode(enc_flags, out);
        if (*cls_cmd) {
            if (cls_flags.train_dir.empty() && cls_flags.model.empty()) {
                err << "aa classify: one of --train-dir or --model is required\n";
                return kExitUsage;
            }
            return cmd_classify(cls_flags, out);
        }
        return cmd_bench(bench_flags, out);
    } catch (const ParameterError& e) {
        err << "aa: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "aa: numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "aa: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "aa: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace aa::cli
