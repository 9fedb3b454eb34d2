#include "mfg/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace mfg::io {

namespace {

std::size_t as_size(const json& j, const char* what) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw InvalidArgument(std::string("io: ") + what + " must be a nonnegative integer");
  }
  return j.get<std::size_t>();
}

void require_shape(const json& j, std::size_t rank) {
  if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != rank) {
    throw InvalidArgument("io: record lacks a rank-" + std::to_string(rank) + " shape");
  }
}

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw InvalidArgument("io: expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw InvalidArgument("io: expected an array of numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

json to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix matrix_from_json(const json& j) {
  require_shape(j, 2);
  const std::size_t rows = as_size(j["shape"][0], "rows"), cols = as_size(j["shape"][1], "cols");
  const Vector data = vector_from_json(j.at("data"));
  if (static_cast<std::size_t>(data.size()) != rows * cols) throw InvalidArgument("io: matrix data does not match shape");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = data(r * cols + c);
  return m;
}

json to_json(const Trajectory& tr) {
  const std::size_t d = tr.size() == 0 ? 0 : static_cast<std::size_t>(tr.front().size());
  json values = json::array();
  for (const Vector& v : tr.values()) values.push_back(to_json(v));
  json j{{"horizon", tr.grid().horizon()}, {"steps", tr.grid().steps()}, {"shape", {tr.size(), d}}, {"values", values}};
  if (tr.has_slopes()) {
    json slopes = json::array();
    for (const Vector& v : tr.slopes()) slopes.push_back(to_json(v));
    j["slopes"] = slopes;
  }
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  require_shape(j, 2);
  const TimeGrid grid(j.at("horizon").get<double>(), j.at("steps").get<int>());
  const std::size_t n = as_size(j["shape"][0], "nodes"), d = as_size(j["shape"][1], "dim");
  if (n != grid.nodes()) throw InvalidArgument("io: trajectory node count does not match its grid");
  auto rows = [&](const json& a) {
    if (!a.is_array() || a.size() != n) throw InvalidArgument("io: trajectory rows do not match shape");
    std::vector<Vector> out;
    for (const json& r : a) {
      out.push_back(vector_from_json(r));
      if (static_cast<std::size_t>(out.back().size()) != d) throw InvalidArgument("io: trajectory row width mismatch");
    }
    return out;
  };
  return Trajectory(grid, rows(j.at("values")), j.contains("slopes") ? rows(j["slopes"]) : std::vector<Vector>{});
}

json to_json(const MfgSolution& sol) {
  return {{"theta", to_json(sol.theta)},       {"u", to_json(sol.u)},
          {"residual", sol.residual},          {"iterations", sol.iterations},
          {"damping", sol.damping},            {"gap_history", sol.gap_history}};
}

MfgSolution solution_from_json(const json& j) {
  return MfgSolution{trajectory_from_json(j.at("theta")), trajectory_from_json(j.at("u")),
                     j.at("residual").get<double>(), j.value("iterations", 0), j.value("damping", 0.0),
                     j.value("gap_history", std::vector<double>{})};
}

json to_json(const NField& field) {
  json states = json::array();
  for (std::size_t s = 0; s < field.states(); ++s) states.push_back(field.indexer().state(s));
  return {{"dim", field.dim()},
          {"players", field.players()},
          {"horizon", field.grid().horizon()},
          {"steps", field.grid().steps()},
          {"row_layout", "state_index * dim + i"},
          {"states", states},
          {"values", to_json(field.values())}};
}

NField nfield_from_json(const json& j) {
  StateIndexer idx(j.at("dim").get<int>(), j.at("players").get<int>());
  const json& states = j.at("states");
  if (states.size() != idx.size()) throw InvalidArgument("io: state list does not match (dim, players)");
  for (std::size_t s = 0; s < idx.size(); ++s) {
    if (states[s].get<CountState>() != idx.state(s)) throw InvalidArgument("io: state order differs from the enumeration");
  }
  return NField(std::move(idx), TimeGrid(j.at("horizon").get<double>(), j.at("steps").get<int>()),
                matrix_from_json(j.at("values")));
}

json to_json(const JointLaw& law) {
  return {{"horizon", law.grid.horizon()}, {"steps", law.grid.steps()}, {"probabilities", to_json(law.probabilities)}};
}

void CsvTable::add(std::vector<double> row) {
  if (row.size() != columns.size()) throw InvalidArgument("csv: row width does not match the header");
  rows.push_back(std::move(row));
}

std::string to_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
    out += '\n';
  }
  return out;
}

CsvTable csv_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(in, line)) throw InvalidArgument("csv: empty input");
  t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& c : split(line)) {
      double x = 0.0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), x);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size()) throw InvalidArgument("csv: bad number '" + c + "'");
      row.push_back(x);
    }
    t.add(std::move(row));
  }
  return t;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_atomic(path, to_csv(table)); }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

}  // namespace mfg::io
