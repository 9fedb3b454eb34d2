#include "mfg/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace mfg {

using io::json;

namespace {

Matrix matrix_rows(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) throw InvalidArgument("config: " + key + " must be a nonempty array of rows");
  const std::size_t cols = j[0].size();
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = io::vector_from_json(j[r]);
    if (static_cast<std::size_t>(row.size()) != cols) throw InvalidArgument("config: " + key + " rows differ in length");
    m.row(r) = row.transpose();
  }
  return m;
}

json rows_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(io::to_json(Vector(m.row(r).transpose())));
  return out;
}

FieldSpec field_from_json(const json& j, const std::string& key) {
  if (!j.is_object()) throw InvalidArgument("config: " + key + " must be an object with a \"type\"");
  FieldSpec f;
  f.type = j.value("type", "");
  std::vector<std::string> allowed{"type"};
  if (f.type == "zero") {
  } else if (f.type == "constant") {
    f.values = io::vector_from_json(j.at("values"));
    allowed.push_back("values");
  } else if (f.type == "diagonal") {
    f.values = io::vector_from_json(j.at("weights"));
    allowed.push_back("weights");
  } else if (f.type == "quadratic") {
    f.A = matrix_rows(j.at("A"), key + ".A");
    f.b = j.contains("b") ? io::vector_from_json(j["b"]) : Vector::Zero(f.A.rows());
    allowed.insert(allowed.end(), {"A", "b"});
  } else {
    throw InvalidArgument("config: " + key + ".type must be zero, constant, diagonal or quadratic");
  }
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw InvalidArgument("config: unknown key " + key + "." + k);
  }
  return f;
}

json field_to_json(const FieldSpec& f) {
  json j{{"type", f.type}};
  if (f.type == "constant") j["values"] = io::to_json(f.values);
  if (f.type == "diagonal") j["weights"] = io::to_json(f.values);
  if (f.type == "quadratic") {
    j["A"] = rows_json(f.A);
    j["b"] = io::to_json(f.b);
  }
  return j;
}

// One row per key: how to read it into the config and how to write it back.
struct Key {
  std::function<void(ExperimentConfig&, const json&)> read;
  std::function<json(const ExperimentConfig&)> write;
};

template <typename T>
Key scalar(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const json& j) { c.*member = j.get<T>(); },
          [member](const ExperimentConfig& c) { return json(c.*member); }};
}

Key vector_key(Vector ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const json& j) { c.*member = io::vector_from_json(j); },
          [member](const ExperimentConfig& c) { return io::to_json(c.*member); }};
}

Key field_key(FieldSpec ExperimentConfig::*member, std::string name) {
  return {[member, name](ExperimentConfig& c, const json& j) { c.*member = field_from_json(j, name); },
          [member](const ExperimentConfig& c) { return field_to_json(c.*member); }};
}

const std::map<std::string, Key>& keys() {
  using C = ExperimentConfig;
  static const std::map<std::string, Key> table{
      {"d", scalar(&C::d)},
      {"cost", scalar(&C::cost)},
      {"poly_a", scalar(&C::poly_a)},
      {"poly_b", scalar(&C::poly_b)},
      {"poly_k", scalar(&C::poly_k)},
      {"coupling", field_key(&C::coupling, "coupling")},
      {"terminal", field_key(&C::terminal, "terminal")},
      {"alpha_cap", scalar(&C::alpha_cap)},
      {"T", scalar(&C::T)},
      {"steps", scalar(&C::steps)},
      {"theta0", vector_key(&C::theta0)},
      {"target", vector_key(&C::target)},
      {"damping", scalar(&C::damping)},
      {"tol", scalar(&C::tol)},
      {"max_iter", scalar(&C::max_iter)},
      {"adaptive_damping", scalar(&C::adaptive_damping)},
      {"min_damping", scalar(&C::min_damping)},
      {"residual_tol", scalar(&C::residual_tol)},
      {"N", scalar(&C::N)},
      {"N_list", scalar(&C::N_list)},
      {"mode", scalar(&C::mode)},
      {"paths", scalar(&C::paths)},
      {"state_cap", scalar(&C::state_cap)},
      {"slope_min", scalar(&C::slope_min)},
      {"slope_max", scalar(&C::slope_max)},
      {"r2_min", scalar(&C::r2_min)},
      {"verify_paths", scalar(&C::verify_paths)},
      {"stationary_starts", scalar(&C::stationary_starts)},
      {"stationary_tol", scalar(&C::stationary_tol)},
      {"stationary_agreement", scalar(&C::stationary_agreement)},
      {"T_list", scalar(&C::T_list)},
      {"conservation_tol", scalar(&C::conservation_tol)},
      {"hamilton_tol", scalar(&C::hamilton_tol)},
      {"perturbations", scalar(&C::perturbations)},
      {"epsilon", scalar(&C::epsilon)},
      {"criticality_ratio", scalar(&C::criticality_ratio)},
      {"planning_tol", scalar(&C::planning_tol)},
      {"planning_max_iter", scalar(&C::planning_max_iter)},
      {"psi_bound", scalar(&C::psi_bound)},
      {"audit_samples", scalar(&C::audit_samples)},
      {"audit_strict", scalar(&C::audit_strict)},
      {"seed", scalar(&C::seed)},
      {"threads", scalar(&C::threads)},
      {"output_dir", scalar(&C::output_dir)},
  };
  return table;
}

}  // namespace

VectorField FieldSpec::build(int d) const {
  auto sized = [&](const Vector& v, const char* what) {
    if (v.size() != d) throw InvalidArgument(std::string("config: ") + what + " must have d entries");
    return v;
  };
  if (type == "zero") return VectorField::zero(d);
  if (type == "constant") return VectorField::constant(sized(values, "constant values"));
  if (type == "diagonal") return VectorField::diagonal(sized(values, "diagonal weights"));
  if (type == "quadratic") {
    if (A.rows() != d || A.cols() != d) throw InvalidArgument("config: quadratic A must be d x d");
    return VectorField::quadratic_form(A, sized(b, "quadratic b"));
  }
  throw InvalidArgument("config: unknown field type " + type);
}

CostModel ExperimentConfig::model() const {
  const VectorField f = coupling.build(d), psi = terminal.build(d);
  if (cost == "quadratic") return CostModel(std::make_shared<QuadraticCost>(f), psi, alpha_cap);
  if (cost == "polynomial") {
    return CostModel(std::make_shared<PolynomialCost>(poly_a, poly_b, poly_k, f, alpha_cap), psi, alpha_cap);
  }
  throw InvalidArgument("config: cost must be quadratic or polynomial");
}

MfgOptions ExperimentConfig::mfg_options() const {
  return MfgOptions{damping, tol, max_iter, adaptive_damping, min_damping, residual_tol};
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!keys().count(k)) throw InvalidArgument("config: unknown key \"" + k + "\"");
  }
  ExperimentConfig c;
  // Dimension-dependent defaults follow d when not given explicitly.
  if (j.contains("d")) {
    try {
      c.d = j["d"].get<int>();
    } catch (const json::exception&) {
      throw InvalidArgument("config: d must be an integer");
    }
    if (c.d < 2) throw InvalidArgument("config: d must be at least 2");
    c.coupling.values = Vector::Ones(c.d);
    c.theta0 = Vector::Constant(c.d, 1.0 / c.d);
  }
  for (const auto& [k, v] : j.items()) {
    try {
      keys().at(k).read(c, v);
    } catch (const json::exception& e) {
      throw InvalidArgument("config: bad value for \"" + k + "\": " + e.what());
    } catch (const std::out_of_range&) {
      throw InvalidArgument("config: missing entry inside \"" + k + "\"");
    }
  }
  validate(c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& [k, key] : keys()) j[k] = key.write(c);
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("override must look like KEY=VALUE: " + assignment);
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  if (!keys().count(key)) throw InvalidArgument("config: unknown key \"" + key + "\"");
  json value = json::parse(raw, nullptr, false);
  j[key] = value.is_discarded() ? json(raw) : value;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw InvalidArgument("config: " + m); };
  if (c.d < 2) fail("d must be at least 2");
  if (c.theta0.size() != c.d) fail("theta0 must have d entries");
  require_simplex(c.theta0, "config: theta0");
  if (c.target.size() != 0) {
    if (c.target.size() != c.d) fail("target must have d entries");
    require_simplex(c.target, "config: target");
  }
  if (!(c.T > 0.0) || !std::isfinite(c.T)) fail("T must be positive");
  if (c.steps < 1) fail("steps must be positive");
  if (!(c.damping > 0.0 && c.damping <= 1.0)) fail("damping must be in (0, 1]");
  if (!(c.tol > 0.0) || !(c.residual_tol > 0.0)) fail("tolerances must be positive");
  if (c.max_iter < 1) fail("max_iter must be positive");
  if (!(c.min_damping > 0.0 && c.min_damping <= c.damping)) fail("min_damping must be in (0, damping]");
  if (c.N < 1) fail("N must be positive");
  if (c.N_list.size() < 2) fail("N_list needs at least two entries");
  for (std::size_t k = 0; k < c.N_list.size(); ++k) {
    if (c.N_list[k] < 1) fail("N_list entries must be positive");
    if (k > 0 && c.N_list[k] <= c.N_list[k - 1]) fail("N_list must be strictly increasing");
  }
  if (c.mode != "exact" && c.mode != "mc") fail("mode must be exact or mc");
  if (c.paths < 2) fail("paths must be at least 2");
  if (c.slope_min > c.slope_max) fail("slope_min exceeds slope_max");
  if (c.verify_paths < 0) fail("verify_paths must be nonnegative");
  if (c.stationary_starts < 1) fail("stationary_starts must be positive");
  for (std::size_t k = 0; k < c.T_list.size(); ++k) {
    if (!(c.T_list[k] > 0.0)) fail("T_list entries must be positive");
    if (k > 0 && c.T_list[k] <= c.T_list[k - 1]) fail("T_list must be strictly increasing");
  }
  if (c.perturbations < 1 || !(c.epsilon > 0.0)) fail("perturbations and epsilon must be positive");
  if (!(c.planning_tol > 0.0) || c.planning_max_iter < 1 || !(c.psi_bound > 0.0)) fail("bad planning settings");
  if (c.audit_samples < 1) fail("audit_samples must be positive");
  if (c.threads < 1) fail("threads must be positive");
  if (c.cost != "quadratic" && c.cost != "polynomial") fail("cost must be quadratic or polynomial");
  // Building the model checks field shapes, symmetry and cost parameters.
  (void)c.model();
}

json default_config() { return to_json(ExperimentConfig{}); }

}  // namespace mfg
