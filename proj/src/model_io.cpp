#include "aa/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aa/error.hpp"

namespace aa::io {

using Eigen::Index;
using Eigen::MatrixXd;
using json = nlohmann::ordered_json;

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'A', 'A', 'M', 'X'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(std::uint8_t(value >> (8 * b)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t offset) {
    T value = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) value |= T(in[offset + b]) << (8 * b);
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    if (std::isspace(static_cast<unsigned char>(delimiter))) {
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            const std::size_t start = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i > start) fields.push_back(line.substr(start, i - start));
        }
        return fields;
    }
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(delimiter, start);
        fields.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

double parse_double(std::string_view field, std::size_t line_no) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw ParseError("cannot parse number '" + std::string(field) + "'", line_no);
    }
    if (!std::isfinite(value)) {
        throw DataError("non-finite value '" + std::string(field) + "' on line " +
                        std::to_string(line_no));
    }
    return value;
}

json sparse_columns(const MatrixXd& m, const char* what) {
    json cols = json::array();
    for (Index j = 0; j < m.cols(); ++j) {
        Eigen::VectorXd col = m.col(j);
        if (!is_simplex(col, 1e-10)) {
            throw DataError(std::string(what) + " column " + std::to_string(j) +
                            " is not on the simplex");
        }
        Eigen::VectorXd kept = (col.array().abs() < kSparseDrop).select(0.0, col);
        if ((kept.array() != col.array()).any()) {
            kept /= kept.sum();
            if ((kept - col).lpNorm<1>() >= 1e-10) {
                throw DataError(std::string(what) + " column " + std::to_string(j) +
                                " changes by more than 1e-10 when sparsified");
            }
        }
        json entries = json::array();
        for (Index i = 0; i < kept.size(); ++i)
            if (kept[i] != 0.0) entries.push_back(json::array({i, kept[i]}));
        cols.push_back(std::move(entries));
    }
    return cols;
}

MatrixXd dense_from_sparse(const json& cols, Index rows, Index ncols, const char* what) {
    if (!cols.is_array() || Index(cols.size()) != ncols) {
        throw FormatError(std::string("model ") + what + ": expected " + std::to_string(ncols) +
                          " columns");
    }
    MatrixXd m = MatrixXd::Zero(rows, ncols);
    for (Index j = 0; j < ncols; ++j) {
        for (const auto& entry : cols[std::size_t(j)]) {
            const auto i = entry.at(0).get<Index>();
            const auto v = entry.at(1).get<double>();
            if (i < 0 || i >= rows) {
                throw FormatError(std::string("model ") + what + ": row index out of range");
            }
            m(i, j) = v;
        }
        if (!is_simplex(m.col(j), 1e-10)) {
            throw FormatError(std::string("model ") + what + " column " + std::to_string(j) +
                              " is not on the simplex");
        }
    }
    return m;
}

}  // namespace

std::string format_document(const nlohmann::ordered_json& doc) {
    std::string out = "{\n";
    bool first = true;
    for (const auto& [key, value] : doc.items()) {
        if (!first) out += ",\n";
        first = false;
        out += "  " + json(key).dump() + ": ";
        const bool nested = value.is_array() && !value.empty() &&
                            std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_array(); });
        if (!nested) {
            out += value.dump();
            continue;
        }
        out += "[\n";
        for (std::size_t i = 0; i < value.size(); ++i) {
            out += "    " + value[i].dump();
            out += i + 1 < value.size() ? ",\n" : "\n";
        }
        out += "  ]";
    }
    return out + "\n}\n";
}

std::vector<std::uint8_t> encode_matrix(const MatrixXd& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + std::size_t(m.size()) * 8);
    for (std::uint8_t b : kMagic) out.push_back(b);
    put_le<std::uint32_t>(out, kMatrixVersion);
    put_le<std::uint64_t>(out, std::uint64_t(m.rows()));
    put_le<std::uint64_t>(out, std::uint64_t(m.cols()));
    for (Index k = 0; k < m.size(); ++k) put_le(out, std::bit_cast<std::uint64_t>(m.data()[k]));
    return out;
}

MatrixXd decode_matrix(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw FormatError("not a matrix file (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kMatrixVersion) {
        throw FormatError("unsupported matrix file version " + std::to_string(version));
    }
    const auto rows = get_le<std::uint64_t>(bytes, 8);
    const auto cols = get_le<std::uint64_t>(bytes, 16);
    const std::uint64_t payload = bytes.size() - kHeaderBytes;
    if (rows != 0 && cols > payload / 8 / rows) {
        throw FormatError("matrix file truncated");
    }
    if (rows * cols * 8 != payload) {
        throw FormatError("matrix file size does not match its header");
    }
    MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index k = 0; k < m.size(); ++k)
        m.data()[k] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, kHeaderBytes + 8 * std::size_t(k)));
    return m;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path.string() + "'");
    return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), std::streamsize(contents.size()));
    if (!out) throw IoError("error writing '" + path.string() + "'");
}

void save_matrix(const std::filesystem::path& path, const MatrixXd& m) {
    const auto bytes = encode_matrix(m);
    write_file(path, std::string(bytes.begin(), bytes.end()));
}

MatrixXd load_matrix(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    return decode_matrix(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

bool is_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::array<char, 4> head{};
    in.read(head.data(), 4);
    return in.gcount() == 4 && std::equal(kMagic.begin(), kMagic.end(), head.begin(),
                                          [](std::uint8_t a, char b) { return a == std::uint8_t(b); });
}

MatrixXd import_delimited_text(const std::filesystem::path& path, char delimiter, bool transpose) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<double> values;
    std::size_t width = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, delimiter);
        if (rows == 0) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw ParseError("expected " + std::to_string(width) + " fields, found " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        for (auto f : fields) values.push_back(parse_double(f, line_no));
        ++rows;
    }
    if (rows == 0) throw DataError("'" + path.string() + "' contains no data");
    // values holds the file row-major; as a column-major (width x rows) matrix that is
    // one file row per column.
    const MatrixXd byrow = Eigen::Map<const MatrixXd>(values.data(), Index(width), Index(rows));
    if (transpose) return byrow;
    return byrow.transpose();
}

MatrixXd load_data(const std::filesystem::path& path, char delimiter, bool transpose) {
    if (is_matrix_file(path)) return load_matrix(path);
    return import_delimited_text(path, delimiter, transpose);
}

void export_delimited_text(const std::filesystem::path& path, const MatrixXd& m, char delimiter) {
    std::ostringstream out;
    out.precision(17);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << delimiter;
            out << m(i, j);
        }
        out << '\n';
    }
    write_file(path, out.str());
}

std::string model_to_json(const ArchetypeModel<double>& model, bool include_z) {
    const Index p = model.A.rows();
    const Index n = model.A.cols();
    if (model.B.rows() != n || model.B.cols() != p) {
        throw DimensionError("model: A and B shapes disagree");
    }
    const auto& c = model.config;
    json doc;
    doc["format"] = "aa-model";
    doc["version"] = kModelVersion;
    doc["dims"] = {{"m", model.Z.rows()}, {"n", n}, {"p", p}};
    doc["config"] = {{"iterations", c.iterations}, {"seed", c.seed},
                     {"tol", c.tol},               {"robust", c.robust},
                     {"epsilon", c.epsilon},       {"auto_epsilon", c.auto_epsilon},
                     {"early_stop", c.early_stop}};
    doc["converged"] = model.converged;
    doc["degenerate"] = model.degenerate;
    doc["dead_archetype_resets"] = model.dead_archetype_resets;
    doc["history"] = model.history;
    doc["squared_error_history"] = model.squared_error_history;
    if (model.weights) {
        doc["weights"] = {{"eps", model.weights->eps},
                          {"w", std::vector<double>(model.weights->w.begin(), model.weights->w.end())}};
    }
    doc["B"] = sparse_columns(model.B, "B");
    doc["A"] = sparse_columns(model.A, "A");
    if (include_z) {
        json z = json::array();
        for (Index j = 0; j < model.Z.cols(); ++j)
            z.push_back(std::vector<double>(model.Z.col(j).begin(), model.Z.col(j).end()));
        doc["Z"] = std::move(z);
    }
    return format_document(doc);
}

ArchetypeModel<double> model_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        if (doc.at("format") != "aa-model") throw FormatError("not a model file");
        if (doc.at("version").get<std::uint32_t>() != kModelVersion) {
            throw FormatError("unsupported model version");
        }
        const auto& dims = doc.at("dims");
        const auto m = dims.at("m").get<Index>();
        const auto n = dims.at("n").get<Index>();
        const auto p = dims.at("p").get<Index>();
        if (m < 0 || n < 1 || p < 1 || p > n) throw FormatError("model: invalid dimensions");

        ArchetypeModel<double> model;
        const auto& c = doc.at("config");
        model.config.p = p;
        model.config.iterations = c.at("iterations").get<Index>();
        model.config.seed = c.at("seed").get<std::uint64_t>();
        model.config.tol = c.at("tol").get<double>();
        model.config.robust = c.at("robust").get<bool>();
        model.config.epsilon = c.at("epsilon").get<double>();
        model.config.auto_epsilon = c.at("auto_epsilon").get<bool>();
        model.config.early_stop = c.at("early_stop").get<bool>();
        model.converged = doc.at("converged").get<bool>();
        model.degenerate = doc.at("degenerate").get<bool>();
        model.dead_archetype_resets = doc.at("dead_archetype_resets").get<Index>();
        model.history = doc.at("history").get<std::vector<double>>();
        model.squared_error_history = doc.at("squared_error_history").get<std::vector<double>>();
        if (doc.contains("weights")) {
            const auto w = doc["weights"].at("w").get<std::vector<double>>();
            if (Index(w.size()) != n) throw FormatError("model: weight vector length");
            WeightVector<double> wv;
            wv.eps = doc["weights"].at("eps").get<double>();
            wv.w = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
            model.weights = std::move(wv);
        }
        model.B = dense_from_sparse(doc.at("B"), n, p, "B");
        model.A = dense_from_sparse(doc.at("A"), p, n, "A");
        if (doc.contains("Z")) {
            const auto& z = doc["Z"];
            if (!z.is_array() || Index(z.size()) != p) throw FormatError("model: Z shape");
            model.Z.resize(m, p);
            for (Index j = 0; j < p; ++j) {
                const auto col = z[std::size_t(j)].get<std::vector<double>>();
                if (Index(col.size()) != m) throw FormatError("model: Z shape");
                model.Z.col(j) = Eigen::Map<const Eigen::VectorXd>(col.data(), m);
            }
            if (!all_finite(model.Z)) throw FormatError("model: non-finite archetype entry");
        } else {
            model.Z.resize(m, 0);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const ArchetypeModel<double>& model,
                bool include_z) {
    write_file(path, model_to_json(model, include_z));
}

ArchetypeModel<double> load_model(const std::filesystem::path& path) {
    return model_from_json(read_file(path));
}

}  // namespace aa::io
