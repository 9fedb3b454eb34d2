#ifndef MFG_CONFIG_HPP
#define MFG_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mfg/cost.hpp"
#include "mfg/io.hpp"
#include "mfg/mfg.hpp"
#include "mfg/potential.hpp"

namespace mfg {

/// A vector field on the simplex given declaratively:
///   {"type": "zero"} | {"type": "constant", "values": [..]} |
///   {"type": "diagonal", "weights": [..]} | {"type": "quadratic", "A": [[..]], "b": [..]}
struct FieldSpec {
  std::string type = "zero";
  Vector values;
  Matrix A;
  Vector b;

  VectorField build(int d) const;
};

/// Every run parameter with its default. The member initializers below are the
/// single source of defaults; README.md mirrors them.
struct ExperimentConfig {
  // model
  int d = 2;
  std::string cost = "quadratic";  // quadratic | polynomial
  double poly_a = 0.5, poly_b = 0.0, poly_k = 0.0;
  FieldSpec coupling{"diagonal", Vector::Ones(2), {}, {}};
  FieldSpec terminal;
  double alpha_cap = 1e3;

  // horizon and data
  double T = 1.0;
  int steps = 1000;
  Vector theta0 = Vector::Constant(2, 0.5);
  Vector target;  // planning only

  // fixed point
  double damping = 0.5;
  double tol = 1e-9;
  int max_iter = 5000;  // long horizons need thousands of damped steps
  bool adaptive_damping = true;
  double min_damping = 1e-3;
  double residual_tol = 1e-6;

  // N-player
  int N = 10;
  std::vector<int> N_list{8, 16, 32, 64};
  std::string mode = "exact";  // exact | mc
  int paths = 10000;
  std::uint64_t state_cap = 2'000'000;
  double slope_min = -1.3, slope_max = -0.7, r2_min = 0.95;

  // solve-mfg extras
  int verify_paths = 0;  // > 0 runs the Monte Carlo value check

  // stationary / trend
  int stationary_starts = 10;
  double stationary_tol = 1e-8;
  double stationary_agreement = 1e-7;
  std::vector<double> T_list{1, 2, 4, 8};

  // potential-check
  double conservation_tol = 1e-6;
  double hamilton_tol = 1e-5;
  int perturbations = 20;
  double epsilon = 1e-3;
  double criticality_ratio = 1e-3;  // first-order term must stay below ratio * epsilon

  // planning
  double planning_tol = 1e-6;
  int planning_max_iter = 50;
  double psi_bound = 50.0;

  // audit
  int audit_samples = 2000;
  bool audit_strict = false;

  // run
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "out";

  CostModel model() const;
  MfgOptions mfg_options() const;
  TimeGrid grid() const { return TimeGrid(T, steps); }
};

/// Parses a flat JSON object; unknown keys and out-of-range values raise
/// InvalidArgument. Missing keys take the defaults.
ExperimentConfig config_from_json(const io::json& j);
io::json to_json(const ExperimentConfig& c);

/// KEY=VAL with VAL read as JSON, falling back to a bare string.
void apply_override(io::json& j, const std::string& assignment);

/// Cross-field checks (simplex theta0, positive T, increasing N_list, ...).
void validate(const ExperimentConfig& c);

/// Built-in defaults as JSON (what `to_json(ExperimentConfig{})` gives).
io::json default_config();

}  // namespace mfg

#endif  // MFG_CONFIG_HPP
