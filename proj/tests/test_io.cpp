#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mfg/config.hpp"
#include "mfg/io.hpp"
#include "mfg/nplayer.hpp"

using namespace mfg;
namespace fs = std::filesystem;
using io::json;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfg_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("JSON records round-trip bit-exactly") {
  SUBCASE("vector and matrix") {
    const Vector v = vec({0.1, 1.0 / 3.0, -2e-300, 7.25});
    CHECK(io::vector_from_json(json::parse(io::to_json(v).dump())) == v);
    Matrix m(2, 3);
    m << 1.0 / 7, 2, 3, 4, 5, M_PI;
    const json j = json::parse(io::to_json(m).dump());
    CHECK(j["shape"] == json({2, 3}));
    CHECK(io::matrix_from_json(j) == m);
  }
  SUBCASE("solution") {
    const CostModel model = make_quadratic_model(VectorField::diagonal(vec({1, 2})), VectorField::diagonal(vec({1, 1})));
    const MfgSolution s = solve_mfg(model, SimplexVec(vec({0.7, 0.3})), TimeGrid(0.5, 50));
    const MfgSolution r = io::solution_from_json(json::parse(io::to_json(s).dump()));
    CHECK(r.residual == s.residual);
    CHECK(r.gap_history == s.gap_history);
    for (std::size_t k = 0; k < s.theta.size(); ++k) {
      CHECK(r.theta[k] == s.theta[k]);
      CHECK(r.u[k] == s.u[k]);
      CHECK(r.theta.slope(k) == s.theta.slope(k));
    }
    CHECK(mfg_residual(model, r.theta, r.u) == s.residual);
  }
  SUBCASE("N-player field") {
    const CostModel model = make_quadratic_model(VectorField::diagonal(vec({1, 1, 1})), VectorField::zero(3));
    const NField f = solve_equilibrium(model, 3, TimeGrid(0.2, 10));
    const NField g = io::nfield_from_json(json::parse(io::to_json(f).dump()));
    CHECK(g.values() == f.values());
    CHECK(g.players() == 3);
  }
  SUBCASE("malformed shapes are rejected") {
    json m = io::to_json(Matrix(Matrix::Ones(2, 2)));
    m["shape"] = {3, 2};
    CHECK_THROWS_AS(io::matrix_from_json(m), InvalidArgument);
    json t = io::to_json(Trajectory(TimeGrid(1, 2), {vec({1, 0}), vec({1, 0}), vec({1, 0})}));
    t["steps"] = 3;
    CHECK_THROWS_AS(io::trajectory_from_json(t), InvalidArgument);
  }
}

TEST_CASE("CSV tables") {
  io::CsvTable t;
  t.columns = {"N", "value"};
  t.add({8, 0.1 + 0.2});
  t.add({16, -1e-17});
  CHECK_THROWS_AS(t.add({1}), InvalidArgument);
  const std::string text = io::to_csv(t);
  CHECK(text.rfind("N,value\n8,", 0) == 0);
  const io::CsvTable r = io::csv_from_string(text);
  CHECK(r.columns == t.columns);
  CHECK(r.rows == t.rows);
  CHECK_THROWS_AS(io::csv_from_string("a\nnot-a-number\n"), InvalidArgument);
}

TEST_CASE("atomic writes") {
  const fs::path dir = scratch("atomic");
  io::write_json(dir / "sub" / "x.json", json{{"a", 1}});
  io::write_json(dir / "sub" / "x.json", json{{"a", 2}});
  CHECK(io::read_json(dir / "sub" / "x.json")["a"] == 2);
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++entries;
  CHECK(entries == 1);
  CHECK_THROWS_AS(io::read_json(dir / "missing.json"), InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("experiment config") {
  SUBCASE("defaults round-trip") {
    const ExperimentConfig c = config_from_json(default_config());
    CHECK(to_json(c) == default_config());
    CHECK(c.steps == 1000);
    CHECK(c.damping == 0.5);
    CHECK(config_from_json(json::object()).N_list == std::vector<int>{8, 16, 32, 64});
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(config_from_json(json{{"stpes", 10}}), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(json{{"coupling", {{"type", "zero"}, {"weights", {1, 1}}}}}), InvalidArgument);
    json j = json::object();
    CHECK_THROWS_AS(apply_override(j, "nope=1"), InvalidArgument);
  }
  SUBCASE("overrides parse JSON and fall back to strings") {
    json j = json::object();
    apply_override(j, "steps=200");
    apply_override(j, "theta0=[0.25,0.75]");
    apply_override(j, "mode=mc");
    apply_override(j, "terminal={\"type\":\"constant\",\"values\":[1,0]}");
    const ExperimentConfig c = config_from_json(j);
    CHECK(c.steps == 200);
    CHECK(c.theta0 == vec({0.25, 0.75}));
    CHECK(c.mode == "mc");
    CHECK(c.model().psi(vec({0.5, 0.5})) == vec({1, 0}));
    CHECK_THROWS_AS(apply_override(j, "steps"), InvalidArgument);
  }
  SUBCASE("dimension-dependent defaults follow d") {
    const ExperimentConfig c = config_from_json(json{{"d", 3}});
    CHECK(c.theta0.size() == 3);
    CHECK(c.model().dim() == 3);
  }
  SUBCASE("validation") {
    auto bad = [](json j) { CHECK_THROWS_AS(config_from_json(j), InvalidArgument); };
    bad({{"theta0", {0.6, 0.6}}});
    bad({{"theta0", {0.2, 0.3, 0.5}}});
    bad({{"T", 0}});
    bad({{"steps", 0}});
    bad({{"N_list", {8, 8}}});
    bad({{"mode", "fast"}});
    bad({{"damping", 1.5}});
    bad({{"steps", "many"}});
    bad({{"coupling", {{"type", "quadratic"}, {"A", {{1, 2}, {0, 1}}}}}});  // not symmetric
    bad({{"cost", "polynomial"}, {"poly_a", -1}});
    bad({{"target", {0.5}}});
  }
}
