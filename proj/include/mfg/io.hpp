#ifndef MFG_IO_HPP
#define MFG_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/core.hpp"
#include "mfg/mfg.hpp"
#include "mfg/nplayer.hpp"

namespace mfg::io {

using json = nlohmann::json;

/// Bumped whenever a record layout changes.
inline constexpr int kFormatVersion = 1;

json to_json(const Vector& v);
Vector vector_from_json(const json& j);

/// {"shape": [rows, cols], "data": row-major}
json to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

/// {"horizon", "steps", "shape": [nodes, d], "values", "slopes"?}
json to_json(const Trajectory& tr);
Trajectory trajectory_from_json(const json& j);

json to_json(const MfgSolution& sol);
MfgSolution solution_from_json(const json& j);

/// Includes the state list so the file can be read without the indexer.
json to_json(const NField& field);
NField nfield_from_json(const json& j);

json to_json(const JointLaw& law);

/// A header row followed by numeric rows, all of the same width.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
};

std::string to_csv(const CsvTable& table);
CsvTable csv_from_string(const std::string& text);

/// Writes to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const json& j);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

json read_json(const std::filesystem::path& path);

}  // namespace mfg::io

#endif  // MFG_IO_HPP
