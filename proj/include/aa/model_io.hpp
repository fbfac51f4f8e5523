#pragma once

// Matrix and model files.
//
// Binary matrix layout (little-endian): "AAMX", u32 version = 1, u64 rows, u64 cols,
// then rows*cols f64 values in column-major order.
//
// Models are JSON documents holding dimensions, the fit configuration, the objective
// histories, A and B as sparse (index, value) columns, and optionally Z.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "aa/archetypal.hpp"

namespace aa::io {

inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr std::uint32_t kModelVersion = 1;
/// Entries below this magnitude are dropped from sparse A and B.
inline constexpr double kSparseDrop = 1e-12;

std::vector<std::uint8_t> encode_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd decode_matrix(const std::vector<std::uint8_t>& bytes);

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

/// True when the file starts with the binary matrix magic.
bool is_matrix_file(const std::filesystem::path& path);

/// Delimited text, one row per line. Rows are dimensions and columns are points unless
/// `transpose` is set. Blank lines are skipped.
Eigen::MatrixXd import_delimited_text(const std::filesystem::path& path, char delimiter = ',',
                                      bool transpose = false);

/// Binary matrix when the magic is present, delimited text otherwise.
Eigen::MatrixXd load_data(const std::filesystem::path& path, char delimiter = ',',
                          bool transpose = false);

/// Writes one row of m per line.
void export_delimited_text(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                           char delimiter = ',');

std::string model_to_json(const ArchetypeModel<double>& model, bool include_z = true);
ArchetypeModel<double> model_from_json(const std::string& text);

void save_model(const std::filesystem::path& path, const ArchetypeModel<double>& model,
                bool include_z = true);
ArchetypeModel<double> load_model(const std::filesystem::path& path);

/// One line per top-level key; arrays of arrays get one line per element.
std::string format_document(const nlohmann::ordered_json& doc);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace aa::io
