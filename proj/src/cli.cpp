#include "mfg/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "mfg/nplayer.hpp"
#include "mfg/potential.hpp"
#include "mfg/random.hpp"

namespace mfg::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr int kCsvSchema = 1;

/// What a subcommand produced: the result record, its tables and the checks
/// that decide between exit 0 and exit 4.
struct Output {
  json result = json::object();
  std::map<std::string, io::CsvTable> tables;
  json checks = json::object();

  void check(const std::string& name, double value, const json& limit, bool ok) {
    checks[name] = {{"value", value}, {"limit", limit}, {"ok", ok}};
  }
  void at_most(const std::string& name, double value, double limit) { check(name, value, limit, value <= limit); }
  bool passed() const {
    for (const auto& [k, c] : checks.items())
      if (!c["ok"].get<bool>()) return false;
    return true;
  }
};

std::vector<std::string> indexed(const std::string& stem, int d) {
  std::vector<std::string> out;
  for (int i = 1; i <= d; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

io::CsvTable trajectory_table(const MfgSolution& sol) {
  const int d = static_cast<int>(sol.theta.front().size());
  io::CsvTable t;
  t.columns = {"t"};
  for (auto& c : indexed("theta", d)) t.columns.push_back(c);
  for (auto& c : indexed("u", d)) t.columns.push_back(c);
  for (std::size_t k = 0; k < sol.theta.size(); ++k) {
    std::vector<double> row{sol.theta.grid().node(k)};
    for (int i = 0; i < d; ++i) row.push_back(sol.theta[k](i));
    for (int i = 0; i < d; ++i) row.push_back(sol.u[k](i));
    t.add(std::move(row));
  }
  return t;
}

double mass_error(const Trajectory& theta) {
  double worst = 0.0;
  for (const Vector& v : theta.values()) worst = std::max(worst, std::abs(v.sum() - 1.0));
  return worst;
}

json max_principle_json(const MaxPrincipleCheck& c) {
  return {{"h0_bound", c.h0_bound}, {"worst_margin", c.worst_margin}, {"holds", c.holds}};
}

// ---------------------------------------------------------------- subcommands

Output solve_mfg_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const MfgSolution sol = solve_mfg(model, SimplexVec(c.theta0), c.grid(), c.mfg_options());
  const MaxPrincipleCheck mp = check_max_principle(sol.u, sampled_h0_bound(model, 10000, c.seed));
  o.result["solution"] = io::to_json(sol);
  o.result["mass_error"] = mass_error(sol.theta);
  o.result["max_principle"] = max_principle_json(mp);
  o.tables["trajectory.csv"] = trajectory_table(sol);
  o.at_most("residual", sol.residual, c.residual_tol);
  o.at_most("mass", mass_error(sol.theta), 1e-10);
  o.check("max_principle", mp.worst_margin, 0.0, mp.holds);

  if (c.verify_paths > 0) {
    const VerificationReport r = verify_value_by_simulation(model, sol, c.verify_paths, c.seed, 0.5, c.threads);
    json states = json::array();
    bool optimal_ok = true, perturbed_ok = true;
    for (int i = 0; i < c.d; ++i) {
      const auto& a = r.optimal[i];
      const auto& b = r.perturbed[i];
      // Deterministic paths have a zero-width interval; allow time quadrature error.
      optimal_ok = optimal_ok && std::abs(a.mean - r.value(i)) <= a.half_width + 1e-6;
      perturbed_ok = perturbed_ok && b.mean - b.half_width > a.mean + a.half_width;
      states.push_back({{"value", r.value(i)},
                        {"optimal_mean", a.mean},
                        {"optimal_half_width", a.half_width},
                        {"perturbed_mean", b.mean},
                        {"perturbed_half_width", b.half_width}});
    }
    o.result["verification"] = {{"paths", r.paths}, {"perturbation", r.perturbation}, {"states", states}};
    o.check("verification_optimal", optimal_ok, 1, optimal_ok);
    o.check("verification_perturbed", perturbed_ok, 1, perturbed_ok);
  }
  return o;
}

Output solve_nplayer_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const NField field = solve_equilibrium(model, c.N, c.grid(), c.state_cap);
  const std::vector<double> profile = gradient_profile(field);
  const MaxPrincipleCheck mp = check_max_principle(field, sampled_h0_bound(model, 10000, c.seed));
  o.result["field"] = io::to_json(field);
  o.result["max_principle"] = max_principle_json(mp);
  io::CsvTable t;
  t.columns = {"t", "gradient"};
  for (std::size_t k = 0; k < profile.size(); ++k) t.add({field.grid().node(k), profile[k]});
  o.tables["gradient_profile.csv"] = t;
  o.check("max_principle", mp.worst_margin, 0.0, mp.holds);
  return o;
}

void vw_table_rows(const VWProfile& p, io::CsvTable& t, double N = -1) {
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    std::vector<double> row;
    if (N > 0) row.push_back(N);
    row.insert(row.end(), {p.times[k], p.V[k], p.W[k], p.V_se[k], p.W_se[k], p.VW_se[k]});
    t.add(std::move(row));
  }
}

Output simulate_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const SimplexVec theta0(c.theta0);
  const MfgSolution mfg = solve_mfg(model, theta0, c.grid(), c.mfg_options());
  const NField field = solve_equilibrium(model, c.N, c.grid(), c.state_cap);
  const JointChain chain(model, field);
  const PathBatch batch = simulate_paths(chain, theta0, c.paths, c.seed, c.threads);
  const VWProfile vw = estimate_VW(field, batch, mfg, c.threads);

  std::size_t jumps = 0;
  for (const auto& e : batch.events) jumps += e.size();
  const int d = c.d;
  io::CsvTable marg;
  marg.columns = {"t"};
  for (auto& s : indexed("p_ref", d)) marg.columns.push_back(s);
  for (auto& s : indexed("mean_fraction", d)) marg.columns.push_back(s);
  const double n_paths = static_cast<double>(batch.size());
  for (std::size_t k = 0; k < field.grid().nodes(); ++k) {
    const double t = field.grid().node(k);
    Vector p = Vector::Zero(d), frac = Vector::Zero(d);
    for (std::size_t q = 0; q < batch.size(); ++q) {
      const std::size_t row = batch.state_at(q, t);
      p(row % d) += 1.0;
      frac += field.indexer().fraction(row / d);
    }
    std::vector<double> r{t};
    for (int i = 0; i < d; ++i) r.push_back(p(i) / n_paths);
    for (int i = 0; i < d; ++i) r.push_back(frac(i) / n_paths);
    marg.add(std::move(r));
  }
  io::CsvTable vwt;
  vwt.columns = {"t", "V", "W", "V_se", "W_se", "VW_se"};
  vw_table_rows(vw, vwt);
  o.tables["marginals.csv"] = marg;
  o.tables["vw_mc.csv"] = vwt;
  o.result["paths"] = batch.size();
  o.result["intensity_bound"] = batch.intensity_bound;
  o.result["total_jumps"] = jumps;
  o.result["mean_jumps_per_path"] = static_cast<double>(jumps) / n_paths;
  o.result["terminal_reference_law"] = std::vector<double>(marg.rows.back().begin() + 1, marg.rows.back().begin() + 1 + d);
  return o;
}

Output converge_cmd(const ExperimentConfig& c) {
  Output o;
  ConvergenceOptions opts;
  opts.mode = c.mode == "mc" ? LawMode::MonteCarlo : LawMode::Exact;
  opts.steps = c.steps;
  opts.paths = c.paths;
  opts.seed = c.seed;
  opts.threads = c.threads;
  opts.mfg = c.mfg_options();
  const CostModel model = c.model();
  const ConvergenceReport rep =
      convergence_study(model, SimplexVec(c.theta0), c.terminal.build(c.d), c.T, c.N_list, opts);

  io::CsvTable table, profiles;
  table.columns = {"N", "sup_vw", "sup_vw_se", "v0", "v0_variance_formula", "sup_gradient"};
  profiles.columns = {"N", "t", "V", "W", "V_se", "W_se", "VW_se"};
  const double var = (c.theta0.array() * (1.0 - c.theta0.array())).maxCoeff();
  double v0_gap = 0.0;
  bool gradient_positive = true;
  json rows = json::array();
  for (const auto& r : rep.rows) {
    const double formula = var / r.N;
    v0_gap = std::max(v0_gap, std::abs(r.v0 - formula));
    gradient_positive = gradient_positive && r.sup_gradient > 0.0;
    table.add({double(r.N), r.sup_vw, r.sup_vw_se, r.v0, formula, r.sup_gradient});
    vw_table_rows(r.profile, profiles, r.N);
    rows.push_back({{"N", r.N}, {"sup_vw", r.sup_vw}, {"sup_vw_se", r.sup_vw_se}, {"v0", r.v0}, {"sup_gradient", r.sup_gradient}});
  }
  auto fit_json = [](const LineFit& f) { return json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}}; };
  o.result["mode"] = c.mode;
  o.result["rows"] = rows;
  o.result["vw_fit"] = fit_json(rep.vw_fit);
  o.tables["convergence.csv"] = table;
  o.tables["vw_profiles.csv"] = profiles;
  const json range{c.slope_min, c.slope_max};
  o.check("vw_slope", rep.vw_fit.slope, range,
          rep.vw_fit.slope >= c.slope_min && rep.vw_fit.slope <= c.slope_max);
  o.check("vw_r2", rep.vw_fit.r2, c.r2_min, rep.vw_fit.r2 >= c.r2_min);
  // A field with no spatial variation (e.g. f = 0, psi = 0) has no gradient rate to fit.
  if (gradient_positive) {
    o.result["gradient_fit"] = fit_json(rep.gradient_fit);
    o.check("gradient_slope", rep.gradient_fit.slope, range,
            rep.gradient_fit.slope >= c.slope_min && rep.gradient_fit.slope <= c.slope_max);
    o.check("gradient_r2", rep.gradient_fit.r2, c.r2_min, rep.gradient_fit.r2 >= c.r2_min);
  } else {
    o.result["gradient_fit"] = nullptr;
  }
  if (opts.mode == LawMode::Exact) o.at_most("v0_variance", v0_gap, 1e-10);
  return o;
}

json triple_json(const StationaryTriple& s) {
  return {{"theta_bar", io::to_json(s.theta_bar)}, {"u_bar", io::to_json(s.u_bar)}, {"kappa", s.kappa}};
}

struct MultiStart {
  StationaryTriple best;
  double spread = 0.0;
  StationaryResidual residual;
  std::vector<StationaryTriple> roots;
};

MultiStart stationary_multistart(const ExperimentConfig& c, const CostModel& model) {
  MultiStart ms;
  const StationaryOptions so{c.stationary_tol, 200, 1e-7};
  for (int s = 0; s < c.stationary_starts; ++s) {
    Rng rng = stream_rng(c.seed, 0x57a7 + s);
    StationaryTriple guess{sample_simplex(rng, c.d), sample_box(rng, c.d, -1, 1), uniform01(rng)};
    guess.u_bar(c.d - 1) = 0.0;
    ms.roots.push_back(solve_stationary(model, guess, so));
  }
  ms.best = ms.roots.front();
  for (const auto& r : ms.roots) {
    ms.spread = std::max({ms.spread, max_norm(Vector(r.theta_bar - ms.best.theta_bar)),
                          max_norm(Vector(r.u_bar - ms.best.u_bar)), std::abs(r.kappa - ms.best.kappa)});
  }
  ms.residual = stationary_residual(model, ms.best);
  return ms;
}

Output stationary_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const MultiStart ms = stationary_multistart(c, model);
  io::CsvTable t;
  t.columns = {"start"};
  for (auto& s : indexed("theta_bar", c.d)) t.columns.push_back(s);
  for (auto& s : indexed("u_bar", c.d)) t.columns.push_back(s);
  t.columns.push_back("kappa");
  for (std::size_t k = 0; k < ms.roots.size(); ++k) {
    std::vector<double> row{double(k)};
    for (int i = 0; i < c.d; ++i) row.push_back(ms.roots[k].theta_bar(i));
    for (int i = 0; i < c.d; ++i) row.push_back(ms.roots[k].u_bar(i));
    row.push_back(ms.roots[k].kappa);
    t.add(std::move(row));
  }
  o.result["stationary"] = triple_json(ms.best);
  o.result["residual"] = {{"kolmogorov", ms.residual.kolmogorov}, {"hamilton_jacobi", ms.residual.hamilton_jacobi}};
  o.result["starts"] = c.stationary_starts;
  o.result["spread"] = ms.spread;
  o.tables["stationary_starts.csv"] = t;
  o.at_most("kolmogorov_residual", ms.residual.kolmogorov, c.stationary_tol);
  o.at_most("hamilton_jacobi_residual", ms.residual.hamilton_jacobi, c.stationary_tol);
  o.at_most("multistart_spread", ms.spread, c.stationary_agreement);
  return o;
}

Output trend_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const MultiStart ms = stationary_multistart(c, model);
  const TrendReport r = trend_experiment(model, SimplexVec(c.theta0), c.terminal.build(c.d), c.T_list, ms.best,
                                         c.steps, c.mfg_options(), c.threads);
  io::CsvTable t;
  t.columns = {"T", "theta_gap", "u_gap", "iterations"};
  for (const auto& row : r.rows) t.add({row.T, row.theta_gap, row.u_gap, double(row.iterations)});
  o.result["stationary"] = triple_json(ms.best);
  o.result["theta_rate"] = r.theta_rate;
  o.result["u_rate"] = r.u_rate;
  o.result["theta_nonincreasing"] = r.theta_nonincreasing;
  o.result["u_nonincreasing"] = r.u_nonincreasing;
  o.tables["trend.csv"] = t;
  o.check("theta_rate_positive", r.theta_rate, 0.0, r.theta_rate > 0.0);
  o.check("u_rate_positive", r.u_rate, 0.0, r.u_rate > 0.0);
  return o;
}

Output potential_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const PotentialModel pm(model, c.seed);
  const MfgSolution sol = solve_mfg(model, SimplexVec(c.theta0), c.grid(), c.mfg_options());
  const double drift = hamiltonian_drift(pm, sol);
  const HamiltonResidual hr = hamilton_residual(pm, sol);
  const CriticalityReport cr = criticality_probe(pm, sol, c.perturbations, c.epsilon, c.seed);
  const double consistency = pm.potential_consistency(200, c.seed);
  io::CsvTable t;
  t.columns = {"t", "H"};
  for (std::size_t k = 0; k < sol.u.size(); ++k) t.add({sol.u.grid().node(k), hamiltonian_H(pm, sol.u[k], sol.theta[k])});
  o.result["solution"] = io::to_json(sol);
  o.result["hamiltonian_drift"] = drift;
  o.result["hamilton_residual"] = {{"theta_dot", hr.theta_dot}, {"u_dot", hr.u_dot}};
  o.result["criticality"] = {{"perturbations", cr.perturbations},
                             {"epsilon", cr.epsilon},
                             {"max_first_order", cr.max_first_order},
                             {"max_second_order", cr.max_second_order},
                             {"base_action", cr.base_action}};
  o.result["potential_consistency"] = consistency;
  o.result["mass_error"] = mass_error(sol.theta);
  o.tables["hamiltonian.csv"] = t;
  o.at_most("residual", sol.residual, c.residual_tol);
  o.at_most("hamiltonian_drift", drift, c.conservation_tol);
  o.at_most("hamilton_theta_dot", hr.theta_dot, c.hamilton_tol);
  o.at_most("hamilton_u_dot", hr.u_dot, c.hamilton_tol);
  o.at_most("criticality_first_order", cr.max_first_order, c.criticality_ratio * c.epsilon);
  o.at_most("potential_consistency", consistency, 1e-6);
  o.at_most("mass", mass_error(sol.theta), 1e-10);
  return o;
}

Output planning_cmd(const ExperimentConfig& c) {
  if (c.target.size() == 0) throw InvalidArgument("planning needs a target distribution (key \"target\")");
  Output o;
  PlanningOptions po;
  po.tol = c.planning_tol;
  po.max_iter = c.planning_max_iter;
  po.psi_bound = c.psi_bound;
  po.steps = c.steps;
  po.mfg = c.mfg_options();
  const PlanningResult r = solve_planning(c.model(), SimplexVec(c.theta0), SimplexVec(c.target), c.T, po);
  o.result["psi_hat"] = io::to_json(r.psi_hat);
  o.result["iterations"] = r.iterations;
  o.result["gap"] = r.gap;
  o.result["solution"] = io::to_json(r.solution);
  o.tables["trajectory.csv"] = trajectory_table(r.solution);
  o.at_most("terminal_gap", r.gap, c.planning_tol);
  o.at_most("residual", r.solution.residual, c.residual_tol);
  return o;
}

Output audit_cmd(const ExperimentConfig& c) {
  Output o;
  const CostModel model = c.model();
  const LipschitzReport lr = lipschitz_audit(model, c.audit_samples, c.seed);
  const MonotonicityReport mr = monotonicity_audit(model, c.audit_samples, c.seed);
  o.result["h0_bound"] = sampled_h0_bound(model, c.audit_samples, c.seed);
  o.result["lipschitz"] = {{"samples", lr.samples},           {"max_ratio_p", lr.max_ratio_p},
                           {"max_ratio_theta", lr.max_ratio_theta}, {"bound_p", lr.bound_p},
                           {"bound_theta", lr.bound_theta},   {"flagged_p", lr.flagged_p},
                           {"flagged_theta", lr.flagged_theta}, {"cap_binding", lr.cap_binding}};
  o.result["monotonicity"] = {{"samples", mr.samples},         {"psi_min", mr.psi_min},
                              {"concavity_max", mr.concavity_max}, {"gamma_state", mr.gamma_state},
                              {"monot_max", mr.monot_max},     {"gamma", mr.gamma},
                              {"psi_ok", mr.psi_ok},           {"concavity_ok", mr.concavity_ok},
                              {"monot_ok", mr.monot_ok}};
  bool contractive = true;
  if (model.running().has_closed_form() && model.running().coupling() != nullptr) {
    const double thr = quadratic_contractivity_threshold(model, c.audit_samples, c.seed);
    const ContractivityReport cr = contractivity_audit(model, thr, c.audit_samples, c.seed);
    contractive = cr.violations == 0;
    o.result["contractivity"] = {{"threshold", cr.threshold},
                                 {"samples", cr.samples},
                                 {"violations", cr.violations},
                                 {"worst_max_margin", cr.worst_max_margin},
                                 {"worst_min_margin", cr.worst_min_margin}};
  } else {
    o.result["contractivity"] = nullptr;
  }
  // Audits are diagnostics; they only decide the exit code when asked to.
  if (c.audit_strict) {
    o.check("lipschitz", lr.flagged_p || lr.flagged_theta, 0, !(lr.flagged_p || lr.flagged_theta));
    o.check("monotonicity", mr.psi_ok && mr.concavity_ok && mr.monot_ok, 1, mr.psi_ok && mr.concavity_ok && mr.monot_ok);
    o.check("contractivity", contractive, 1, contractive);
  }
  return o;
}

Output validate_cmd(const std::string& input) {
  if (input.empty()) throw InvalidArgument("validate needs --input pointing at a result.json");
  const json stored = io::read_json(input);
  if (!stored.contains("config") || !stored.contains("result") || !stored["result"].contains("solution")) {
    throw InvalidArgument(input + ": no stored trajectories to re-validate");
  }
  const ExperimentConfig cfg = config_from_json(stored["config"]);
  CostModel model = cfg.model();
  if (stored["result"].contains("psi_hat")) {
    model = model.with_terminal(VectorField::constant(io::vector_from_json(stored["result"]["psi_hat"])));
  }
  const MfgSolution sol = io::solution_from_json(stored["result"]["solution"]);
  const double again = mfg_residual(model, sol.theta, sol.u);
  Output o;
  o.result["input"] = fs::path(input).filename().string();
  o.result["kind"] = stored.value("kind", "");
  o.result["stored_residual"] = sol.residual;
  o.result["recomputed_residual"] = again;
  o.result["mass_error"] = mass_error(sol.theta);
  o.at_most("residual_reproduced", std::abs(again - sol.residual), 1e-12);
  o.at_most("mass", mass_error(sol.theta), 1e-10);
  return o;
}

using Handler = std::function<Output(const ExperimentConfig&, const std::string&)>;

const std::map<std::string, Handler>& handlers() {
  auto plain = [](Output (*f)(const ExperimentConfig&)) {
    return Handler([f](const ExperimentConfig& c, const std::string&) { return f(c); });
  };
  static const std::map<std::string, Handler> table{
      {"solve-mfg", plain(solve_mfg_cmd)},
      {"solve-nplayer", plain(solve_nplayer_cmd)},
      {"simulate", plain(simulate_cmd)},
      {"converge", plain(converge_cmd)},
      {"stationary", plain(stationary_cmd)},
      {"trend", plain(trend_cmd)},
      {"potential-check", plain(potential_cmd)},
      {"planning", plain(planning_cmd)},
      {"audit", plain(audit_cmd)},
      {"validate", [](const ExperimentConfig&, const std::string& in) { return validate_cmd(in); }},
  };
  return table;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// The config as it affects results: thread count and output location are
/// left out so result files compare equal across them.
json result_config(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("threads");
  j.erase("output_dir");
  return j;
}

json error_record(const std::string& kind, const std::string& message, int code) {
  return {{"error", kind}, {"message", message}, {"exit_code", code}};
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, v] : handlers()) n.push_back(k);
    return n;
  }();
  return names;
}

fs::path resolve_run_dir(const std::string& out, const ExperimentConfig& config, const std::string& subcommand) {
  fs::path base = out.empty() ? fs::path(config.output_dir) : fs::path(out);
  if (const char* root = std::getenv("MFG_OUTPUT_ROOT"); root != nullptr && *root != '\0' && base.is_relative()) {
    base = fs::path(root) / base;
  }
  return base / subcommand;
}

int run(const std::string& subcommand, const ExperimentConfig& config, const fs::path& run_dir, const std::string& input) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_utc = utc_now();
  json manifest{{"tool", "mfgctl"},
                {"version", kVersion},
                {"format_version", io::kFormatVersion},
                {"csv_schema_version", kCsvSchema},
                {"subcommand", subcommand},
                {"config", to_json(config)},
                {"seed", config.seed},
                {"threads", config.threads},
                {"started_utc", started_utc},
                {"build",
                 {{"compiler", __VERSION__},
                  {"cxx", __cplusplus},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)}}}};
  if (!input.empty()) manifest["input"] = input;
  std::vector<std::string> files;
  int code = kOk;
  json error;

  try {
    // A stale record from an earlier failed run must not sit next to fresh results.
    fs::remove(run_dir / "error.json");
    const auto it = handlers().find(subcommand);
    if (it == handlers().end()) throw InvalidArgument("unknown subcommand " + subcommand);
    const Output out = it->second(config, input);
    const bool ok = out.passed();
    json result{{"format_version", io::kFormatVersion},
                {"kind", subcommand},
                {"config", result_config(config)},
                {"result", out.result},
                {"checks", out.checks},
                {"tolerances_met", ok}};
    io::write_json(run_dir / "result.json", result);
    files.push_back("result.json");
    for (const auto& [name, table] : out.tables) {
      io::write_csv(run_dir / name, table);
      files.push_back(name);
    }
    if (!ok) {
      code = kTolerance;
      std::vector<std::string> failed;
      for (const auto& [k, c] : out.checks.items())
        if (!c["ok"].get<bool>()) failed.push_back(k);
      error = error_record("tolerance", "requested tolerances not met", code);
      error["failed_checks"] = failed;
    }
  } catch (const PlanningError& e) {
    code = kNonconvergence;
    error = error_record("planning", e.what(), code);
    error["best_gap"] = e.best_gap();
    error["history"] = e.history();
  } catch (const ConvergenceError& e) {
    code = kNonconvergence;
    error = error_record("nonconvergence", e.what(), code);
    error["history"] = e.history();
  } catch (const NonFiniteError& e) {
    code = kNonconvergence;
    error = error_record("non_finite", e.what(), code);
  } catch (const InvalidArgument& e) {
    code = kValidation;
    error = error_record("validation", e.what(), code);
  } catch (const StateSpaceTooLarge& e) {
    code = kValidation;
    error = error_record("state_space", e.what(), code);
  } catch (const std::exception& e) {
    code = kOther;
    error = error_record("internal", e.what(), code);
  }

  try {
    if (!error.is_null()) {
      io::write_json(run_dir / "error.json", error);
      files.push_back("error.json");
      std::cerr << "mfgctl " << subcommand << ": " << error["message"].get<std::string>() << "\n";
    }
    manifest["files"] = files;
    manifest["exit_code"] = code;
    manifest["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    io::write_json(run_dir / "manifest.json", manifest);
  } catch (const std::exception& e) {
    std::cerr << "mfgctl: cannot write outputs to " << run_dir << ": " << e.what() << "\n";
    return code == kOk ? kOther : code;
  }
  return code;
}

int main(int argc, const char* const* argv) {
  CLI::App app{"Finite-state mean field game solver and experiment runner", "mfgctl"};
  app.require_subcommand(0, 1);
  std::string config_path, out, input;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool print_defaults = false;
  app.add_option("--config", config_path, "JSON config file (flat object)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out, "output directory (default: config output_dir)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--override", overrides, "KEY=VALUE with VALUE as JSON (repeatable)");
  app.add_flag("--print-defaults", print_defaults, "print the default config and exit");
  std::map<std::string, CLI::App*> subs;
  for (const std::string& name : subcommands()) {
    CLI::App* s = app.add_subcommand(name, "");
    s->fallthrough();
    subs[name] = s;
  }
  subs["validate"]->add_option("--input", input, "result.json to re-validate")->required();
  app.get_subcommand("solve-mfg")->description("solve the mean field game (initial-terminal value problem)");
  app.get_subcommand("solve-nplayer")->description("solve the N+1-player equilibrium system");
  app.get_subcommand("simulate")->description("simulate the N-player joint chain and summarize paths");
  app.get_subcommand("converge")->description("N-sweep: sup(V+W) and gradient rates with log-log fits");
  app.get_subcommand("stationary")->description("multi-start stationary solution");
  app.get_subcommand("trend")->description("trend to the stationary solution over growing horizons");
  app.get_subcommand("potential-check")->description("Hamiltonian conservation and criticality of the action");
  app.get_subcommand("planning")->description("steer theta0 to a target by shooting on the terminal value");
  app.get_subcommand("audit")->description("Lipschitz, monotonicity and contractivity audits");
  app.get_subcommand("validate")->description("recompute the residual of a stored result");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? kOk : kValidation;
  }
  if (print_defaults) {
    std::cout << default_config().dump(2) << "\n";
    return kOk;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return kValidation;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  ExperimentConfig config;
  try {
    json j = config_path.empty() ? json::object() : io::read_json(config_path);
    for (const std::string& o : overrides) apply_override(j, o);
    if (seed) j["seed"] = *seed;
    if (threads) j["threads"] = *threads;
    config = config_from_json(j);
  } catch (const std::exception& e) {
    std::cerr << "mfgctl: " << e.what() << "\n";
    try {
      const fs::path dir = resolve_run_dir(out, ExperimentConfig{}, sub);
      io::write_json(dir / "error.json", error_record("validation", e.what(), kValidation));
    } catch (const std::exception&) {
    }
    return kValidation;
  }
  const fs::path dir = resolve_run_dir(out, config, sub);
  const int code = run(sub, config, dir, input);
  std::cout << (dir / "result.json").string() << " (exit " << code << ")\n";
  return code;
}

}  // namespace mfg::cli
