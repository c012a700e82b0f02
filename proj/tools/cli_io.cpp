#include "cli_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include <CLI/CLI.hpp>

namespace infoacq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& rule) {
  fail(ErrorCode::ConfigError, path + ": " + rule);
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) config_fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* j = find(key)) {
      if (!j->is_number()) config_fail(child(key), "expected a number");
      out = j->get<double>();
      if (!std::isfinite(out)) config_fail(child(key), "must be finite");
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out, long long min_value) {
    if (const json* j = find(key)) {
      if (!j->is_number_integer()) config_fail(child(key), "expected an integer");
      if (j->is_number_unsigned()) {
        const auto u = j->get<unsigned long long>();
        if (u > static_cast<unsigned long long>(std::numeric_limits<Int>::max()))
          config_fail(child(key), "out of range");
        out = static_cast<Int>(u);
      } else {
        const auto s = j->get<long long>();
        if (s < min_value) config_fail(child(key), "must be >= " + std::to_string(min_value));
        out = static_cast<Int>(s);
      }
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* j = find(key)) {
      if (!j->is_string()) config_fail(child(key), "expected a string");
      out = j->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.count(key)) config_fail(child(key), "unknown key");
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_model(const json& j, ModelParams& m) {
  ObjectReader r(j, "model");
  r.number("lambda", m.lambda);
  r.number("mu_bar", m.mu_bar);
  r.number("sigma1", m.sigma1);
  r.number("sigma2", m.sigma2);
  r.number("delta", m.delta);
  r.number("kappa", m.kappa);
  r.number("rho", m.rho);
  r.finish();
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.message());
  }
}

void parse_cost(const json& j, CostConfig& c) {
  ObjectReader r(j, "cost");
  r.string("kind", c.kind);
  r.number("zeta", c.zeta);
  r.number("epsilon", c.epsilon);
  r.number("linear", c.linear);
  r.finish();
  if (c.kind != "quadratic" && c.kind != "power" && c.kind != "affine_quadratic")
    config_fail("cost.kind", "expected quadratic, power or affine_quadratic");
  if (!(c.zeta > 0.0)) config_fail("cost.zeta", "must be > 0");
  if (!(c.epsilon > 0.0)) config_fail("cost.epsilon", "must be > 0");
  if (!(c.linear >= 0.0)) config_fail("cost.linear", "must be >= 0");
}

void parse_sim(const json& j, SimConfig& s) {
  ObjectReader r(j, "numerics.sim");
  r.number("dt", s.dt);
  r.number("horizon", s.horizon);
  r.integer("n_paths", s.n_paths, 1);
  r.integer("master_seed", s.master_seed, 0);
  r.number("x0", s.x0);
  r.number("m0", s.m0);
  r.number("gamma0", s.gamma0);
  std::string mode = s.mu0_mode == Mu0Mode::Fixed ? "fixed" : "sample";
  r.string("mu0_mode", mode);
  if (mode == "fixed") {
    s.mu0_mode = Mu0Mode::Fixed;
  } else if (mode == "sample") {
    s.mu0_mode = Mu0Mode::SampleFromPrior;
  } else {
    config_fail("numerics.sim.mu0_mode", "expected sample or fixed");
  }
  r.number("mu0_value", s.mu0_value);
  r.integer("noise_substeps", s.noise_substeps, 1);
  r.integer("threads", s.threads, 0);
  r.finish();
}

void parse_numerics(const json& j, NumericsConfig& n) {
  ObjectReader r(j, "numerics");
  r.number("gamma_max_factor", n.gamma_max_factor);
  if (const json* g = r.find("gamma_max")) {
    if (!g->is_number()) config_fail("numerics.gamma_max", "expected a number");
    n.gamma_max = g->get<double>();
    if (!(*n.gamma_max > 0.0) || !std::isfinite(*n.gamma_max)) config_fail("numerics.gamma_max", "must be > 0");
  }
  r.integer("grid_n", n.grid_n, 0);
  r.number("hjb_dt", n.hjb_dt);
  r.number("hjb_tol", n.hjb_tol);
  r.string("hjb_scheme", n.hjb_scheme);
  r.number("ode_dt", n.ode_dt);
  r.number("curve_horizon", n.curve_horizon);
  if (const json* g = r.find("curve_gamma0")) {
    if (!g->is_array()) config_fail("numerics.curve_gamma0", "expected an array of numbers");
    n.curve_gamma0.clear();
    for (std::size_t i = 0; i < g->size(); ++i) {
      const json& e = (*g)[i];
      if (!e.is_number()) config_fail("numerics.curve_gamma0[" + std::to_string(i) + "]", "expected a number");
      n.curve_gamma0.push_back(e.get<double>());
    }
  }
  if (const json* s = r.find("sim")) parse_sim(*s, n.sim);
  r.finish();

  if (!(n.gamma_max_factor > 1.0)) config_fail("numerics.gamma_max_factor", "must be > 1");
  if (n.grid_n < 201) config_fail("numerics.grid_n", "must be >= 201");
  if (!(n.hjb_dt >= 0.0)) config_fail("numerics.hjb_dt", "must be >= 0 (0 selects automatically)");
  if (!(n.hjb_tol > 0.0)) config_fail("numerics.hjb_tol", "must be > 0");
  if (n.hjb_scheme != "second_order" && n.hjb_scheme != "first_order")
    config_fail("numerics.hjb_scheme", "expected second_order or first_order");
  if (!(n.ode_dt > 0.0 && n.ode_dt <= 0.1)) config_fail("numerics.ode_dt", "must lie in (0, 0.1]");
  if (!(n.curve_horizon > 0.0)) config_fail("numerics.curve_horizon", "must be > 0");
}

json coefficients_json(const Coefficients& c) {
  return json{{"a1", c.a1},       {"a2", c.a2},       {"a3", c.a3},
              {"b1", c.b1},       {"b2", c.b2},       {"a_bar", c.a_bar},
              {"C1", c.C1},       {"L_v", c.L_v},     {"M0", c.M0},
              {"h_max", c.h_max}, {"h_max_clamped", c.h_max_clamped}, {"hessian_det", c.hessian_det()}};
}

json base_document(const RunConfig& cfg, const std::string& command) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["command"] = command;
  doc["config"] = to_json(cfg);
  return doc;
}

fs::path ensure_output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::ConfigError, "outputs.directory: cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream os(file, std::ios::binary);
  if (!os) fail(ErrorCode::ConfigError, "cannot open " + file.string() + " for writing");
  os << text;
}

void write_json(const fs::path& file, const json& doc) { write_text(file, doc.dump(2) + "\n"); }

// Null for non-finite numbers, which JSON cannot carry.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string file_label(const std::string& label) {
  std::string out;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-') {
      out += ch;
    } else if (ch == '(' || ch == '_') {
      out += '_';
    }
  }
  return out;
}

json estimate_json(const MCEstimate& e, double oracle) {
  return json{{"policy", e.policy},
              {"mean", num(e.mean)},
              {"std_error", num(e.std_error)},
              {"n_paths", e.n_paths},
              {"truncation_bound", num(e.truncation_bound)},
              {"n_failed", e.n_failed},
              {"oracle", num(oracle)},
              {"within_tolerance", std::abs(e.mean - oracle) < 3.0 * e.std_error + e.truncation_bound}};
}

std::string sign_symbol(int s) { return s > 0 ? "+" : (s < 0 ? "-" : "?"); }

std::string verdict(int expected, bool ok) {
  if (expected == 0) return "unasserted";
  return ok ? "PASS" : "FAIL";
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

Policy parse_policy(const std::string& name) {
  if (name == "optimal") return Policy::optimal();
  if (name == "no_acquisition") return Policy::no_acquisition();
  if (name == "full_observation") return Policy::full_observation();
  const std::string prefix = "constant:";
  if (name.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const double h = std::stod(name.substr(prefix.size()), &used);
      if (used == name.size() - prefix.size() && h >= 0.0) return Policy::constant_rate(h);
    } catch (const std::exception&) {
    }
  }
  fail(ErrorCode::ConfigError,
       "--policy: expected all, optimal, no_acquisition, full_observation or constant:<rate>, got '" + name + "'");
}

}  // namespace

CostFunction CostConfig::build() const {
  CostFunction c;
  if (kind == "quadratic") {
    c = CostFunction::quadratic(zeta);
  } else if (kind == "power") {
    c = CostFunction::power(zeta, epsilon);
  } else {
    c = CostFunction::affine_quadratic(zeta, linear);
  }
  c.validate();
  return c;
}

RunConfig parse_config(const json& doc) {
  RunConfig cfg;
  ObjectReader root(doc, "");
  if (const json* j = root.find("model")) parse_model(*j, cfg.model);
  if (const json* j = root.find("cost")) parse_cost(*j, cfg.cost);
  if (const json* j = root.find("numerics")) parse_numerics(*j, cfg.numerics);
  if (const json* j = root.find("outputs")) {
    ObjectReader r(*j, "outputs");
    r.string("directory", cfg.output_directory);
    r.finish();
    if (cfg.output_directory.empty()) config_fail("outputs.directory", "must not be empty");
  }
  root.finish();

  // Checks that need the derived model.
  try {
    const Model model = build_model(cfg);
    cfg.numerics.sim.validate(model);
    for (std::size_t i = 0; i < cfg.numerics.curve_gamma0.size(); ++i) {
      const double g = cfg.numerics.curve_gamma0[i];
      if (!(g >= 0.0 && g <= model.coeffs.gamma_max))
        config_fail("numerics.curve_gamma0[" + std::to_string(i) + "]", "must lie in [0, gamma_max]");
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    fail(ErrorCode::ConfigError, e.message());
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& n = cfg.numerics;
  const auto& s = n.sim;
  json sim{{"dt", s.dt},
           {"horizon", s.horizon},
           {"n_paths", s.n_paths},
           {"master_seed", s.master_seed},
           {"x0", s.x0},
           {"m0", s.m0},
           {"gamma0", s.gamma0},
           {"mu0_mode", s.mu0_mode == Mu0Mode::Fixed ? "fixed" : "sample"},
           {"mu0_value", s.mu0_value},
           {"noise_substeps", s.noise_substeps},
           {"threads", s.threads}};
  json numerics{{"gamma_max_factor", n.gamma_max_factor},
                {"gamma_max", n.gamma_max ? json(*n.gamma_max) : json(nullptr)},
                {"grid_n", n.grid_n},
                {"hjb_dt", n.hjb_dt},
                {"hjb_tol", n.hjb_tol},
                {"hjb_scheme", n.hjb_scheme},
                {"ode_dt", n.ode_dt},
                {"curve_horizon", n.curve_horizon},
                {"curve_gamma0", n.curve_gamma0},
                {"sim", sim}};
  return json{{"model",
               {{"lambda", m.lambda},
                {"mu_bar", m.mu_bar},
                {"sigma1", m.sigma1},
                {"sigma2", m.sigma2},
                {"delta", m.delta},
                {"kappa", m.kappa},
                {"rho", m.rho}}},
              {"cost",
               {{"kind", cfg.cost.kind},
                {"zeta", cfg.cost.zeta},
                {"epsilon", cfg.cost.epsilon},
                {"linear", cfg.cost.linear}}},
              {"numerics", numerics},
              {"outputs", {{"directory", cfg.output_directory}}}};
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    fail(ErrorCode::ConfigError, "--set: expected path=value, got '" + std::string(assignment) + "'");
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorCode::ConfigError, "--set: empty path component in '" + path + "'");
    if (!node->is_object()) {
      if (!node->is_null()) fail(ErrorCode::ConfigError, "--set: '" + path + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_config(const fs::path& file, const std::vector<std::string>& overrides,
                      const std::optional<std::string>& out_dir) {
  std::ifstream is(file);
  if (!is) fail(ErrorCode::ConfigError, "cannot read config file " + file.string());
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded()) fail(ErrorCode::ConfigError, "config file " + file.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  if (out_dir) apply_override(doc, "outputs.directory=" + json(*out_dir).dump());
  return parse_config(doc);
}

Model build_model(const RunConfig& cfg) {
  const CostFunction cost = cfg.cost.build();
  const double gmax = cfg.numerics.gamma_max ? *cfg.numerics.gamma_max
                                             : default_gamma_max(cfg.model, cfg.numerics.gamma_max_factor);
  return make_model(cfg.model, cost, gmax);
}

ValueIterationOptions vi_options(const RunConfig& cfg) {
  ValueIterationOptions o;
  o.dt = cfg.numerics.hjb_dt;
  o.tol = cfg.numerics.hjb_tol;
  o.scheme = cfg.numerics.hjb_scheme == "first_order" ? BellmanScheme::FirstOrder : BellmanScheme::SecondOrder;
  return o;
}

ValueTable solve_table(const RunConfig& cfg, const Model& model) {
  const Grid grid = Grid::uniform(0.0, model.coeffs.gamma_max, cfg.numerics.grid_n);
  return value_iteration(grid, model, vi_options(cfg));
}

int cmd_solve(const RunConfig& cfg, std::ostream& log) {
  const Model model = build_model(cfg);
  const fs::path dir = ensure_output_dir(cfg);
  json summary = base_document(cfg, "solve");
  summary["coefficients"] = coefficients_json(model.coeffs);
  summary["gamma_inf0"] = model.coeffs.gamma_inf0;
  summary["gamma_max"] = model.coeffs.gamma_max;
  summary["warnings"] = model.coeffs.warnings;
  const ValueIterationOptions opt = vi_options(cfg);
  summary["hjb_dt"] = opt.dt > 0.0 ? opt.dt : std::min(1e-3, max_stable_dt(model));

  ValueTable table;
  try {
    table = solve_table(cfg, model);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoConvergence) throw;
    summary["status"] = "failed";
    summary["error"] = e.what();
    write_json(dir / "summary.json", summary);
    log << "solve: " << e.what() << "\n";
    return kExitNumerical;
  }
  {
    std::ostringstream os;
    table.write_csv(os);
    write_text(dir / "value.csv", os.str());
  }
  summary["status"] = "ok";
  summary["gamma_D"] = table.gamma_D;
  summary["residual"] = table.residual;
  summary["iterations"] = table.iterations;
  summary["grid_n"] = table.grid.size();
  write_json(dir / "summary.json", summary);
  log << "solve: residual " << fmt17(table.residual) << ", gamma_D " << fmt17(table.gamma_D) << "\n";
  return kExitOk;
}

int cmd_equilibrium(const RunConfig& cfg, std::ostream& log) {
  const Model model = build_model(cfg);
  const fs::path dir = ensure_output_dir(cfg);
  const EquilibriumPoint eq = solve_equilibrium(model);
  const ValueTable table = solve_table(cfg, model);

  json doc = base_document(cfg, "equilibrium");
  doc["gamma_eq"] = eq.gamma_eq;
  doc["p_eq"] = eq.p_eq;
  doc["h_eq"] = eq.h_eq;
  doc["v_eq"] = eq.v_eq;
  doc["residual"] = eq.residual;
  doc["newton_iterations"] = eq.newton_iterations;
  doc["used_bisection"] = eq.used_bisection;
  doc["gamma_inf0"] = model.coeffs.gamma_inf0;
  doc["gamma_D"] = table.gamma_D;
  try {
    doc["jacobian_det"] = jacobian_phi(eq.gamma_eq, eq.p_eq, model).determinant();
  } catch (const Error& e) {
    doc["jacobian_det"] = nullptr;
    doc["jacobian_note"] = e.what();
  }
  try {
    doc["slope_closed_form"] = equilibrium_slope(eq, model, table.gamma_D, table.grid.spacing);
  } catch (const Error& e) {
    doc["slope_closed_form"] = nullptr;
    doc["slope_note"] = e.what();
  }
  doc["slope_table"] = table.slope_at(eq.gamma_eq);

  json sens = json::object();
  if (eq.gamma_eq > 0.0) {
    for (auto p : {SensitivityParameter::Sigma1, SensitivityParameter::Sigma2Sq, SensitivityParameter::Kappa,
                   SensitivityParameter::Alpha}) {
      const std::string name(to_string(p));
      try {
        const SensitivityReport r = sensitivity(eq, p, model, 1.0, false);
        sens[name] = json{{"gamma_eq", r.d_gamma_eq}, {"p_eq", r.d_p_eq}, {"h_eq", r.d_h_eq}, {"v_eq", r.d_v_eq}};
      } catch (const Error& e) {
        sens[name] = json{{"error", e.what()}};
      }
    }
  }
  doc["sensitivities"] = sens;
  write_json(dir / "equilibrium.json", doc);
  log << "equilibrium: gamma_eq " << fmt17(eq.gamma_eq) << ", h_eq " << fmt17(eq.h_eq) << ", residual "
      << fmt17(eq.residual) << "\n";
  return kExitOk;
}

int cmd_sensitivity(const RunConfig& cfg, const std::vector<SensitivityParameter>& params, std::ostream& log) {
  const Model model = build_model(cfg);
  const fs::path dir = ensure_output_dir(cfg);
  const EquilibriumPoint eq = solve_equilibrium(model);

  json doc = base_document(cfg, "sensitivity");
  doc["gamma_eq"] = eq.gamma_eq;
  doc["p_eq"] = eq.p_eq;
  doc["h_eq"] = eq.h_eq;
  doc["v_eq"] = eq.v_eq;
  bool all_ok = true;
  json sens = json::object();
  const char* names[4] = {"gamma_eq", "p_eq", "h_eq", "v_eq"};
  for (auto p : params) {
    const SensitivityReport r = sensitivity(eq, p, model, 1.0, false);
    const FiniteDifferenceSensitivity fd = sensitivity_fd(p, model);
    doc["jacobian_det"] = r.jacobian_det;
    const double an[4] = {r.d_gamma_eq, r.d_p_eq, r.d_h_eq, r.d_v_eq};
    const double fdv[4] = {fd.d_gamma_eq, fd.d_p_eq, fd.d_h_eq, fd.d_v_eq};
    const int ex[4] = {r.expected.gamma, r.expected.p, r.expected.h, r.expected.v};
    json a, f, re, es, vd;
    for (int k = 0; k < 4; ++k) {
      a[names[k]] = an[k];
      f[names[k]] = fdv[k];
      re[names[k]] = rel_err(an[k], fdv[k]);
      es[names[k]] = sign_symbol(ex[k]);
      vd[names[k]] = verdict(ex[k], r.sign_ok[k]);
    }
    all_ok = all_ok && r.all_signs_ok();
    sens[std::string(to_string(p))] = json{{"analytic", a},       {"finite_difference", f}, {"relative_error", re},
                                           {"expected_signs", es}, {"verdicts", vd},         {"one_sided", r.one_sided}};
  }
  doc["sensitivities"] = sens;
  doc["all_signs_ok"] = all_ok;
  write_json(dir / "sensitivity.json", doc);
  log << "sensitivity: " << (all_ok ? "all asserted signs hold" : "sign mismatch") << "\n";
  return all_ok ? kExitOk : kExitNumerical;
}

int cmd_simulate(const RunConfig& cfg, const std::string& policy, std::size_t dump_paths, std::ostream& log) {
  const Model model = build_model(cfg);
  const SimConfig& sim = cfg.numerics.sim;
  std::vector<Policy> policies;
  if (policy == "all") {
    policies = {Policy::full_observation(), Policy::optimal(), Policy::no_acquisition()};
  } else {
    policies = {parse_policy(policy)};
  }
  const fs::path dir = ensure_output_dir(cfg);
  const FullValueModel fv(solve_table(cfg, model));
  const PolicyArtifacts art(fv.table());

  json doc = base_document(cfg, "simulate");
  doc["oracles"] = json{{"W", assemble_W(fv, sim.x0, sim.m0, sim.gamma0)},
                        {"V_full", policy_oracle(sim, Policy::full_observation(), fv)},
                        {"V_no", value_no_acquisition(fv, sim.x0, sim.m0, sim.gamma0)}};

  std::vector<MCEstimate> estimates;
  if (policy == "all") {
    const PolicyComparison cmp = compare_policies(sim, fv.table(), false);
    estimates = {cmp.full, cmp.optimal, cmp.no_acquisition};
    doc["ordering"] = json{{"full_vs_optimal_gap", cmp.full_vs_optimal_gap},
                           {"full_vs_optimal_tol", cmp.full_vs_optimal_tol},
                           {"optimal_vs_no_gap", cmp.optimal_vs_no_gap},
                           {"optimal_vs_no_tol", cmp.optimal_vs_no_tol},
                           {"verdict", cmp.ordering_holds ? "PASS" : "FAIL"}};
  } else {
    estimates = {mc_cost(sim, policies[0], art)};
  }
  json arr = json::array();
  for (std::size_t k = 0; k < policies.size(); ++k) {
    arr.push_back(estimate_json(estimates[k], policy_oracle(sim, policies[k], fv)));
    log << "simulate: " << estimates[k].policy << " mean " << fmt17(estimates[k].mean) << " +- "
        << fmt17(estimates[k].std_error) << "\n";
  }
  doc["estimates"] = arr;

  if (dump_paths > 0) {
    const fs::path pdir = dir / "paths";
    std::error_code ec;
    fs::create_directories(pdir, ec);
    if (ec) fail(ErrorCode::ConfigError, "cannot create " + pdir.string());
    const std::size_t n = std::min<std::size_t>(dump_paths, sim.n_paths);
    for (const Policy& p : policies) {
      for (std::size_t i = 0; i < n; ++i) {
        std::ostringstream os;
        simulate_path(sim, p, art, i).write_csv(os);
        write_text(pdir / ("path_" + std::to_string(i) + "_" + file_label(p.label()) + ".csv"), os.str());
      }
    }
  }
  write_json(dir / "mc.json", doc);
  if (doc.contains("ordering") && doc["ordering"]["verdict"] == "FAIL") return kExitNumerical;
  return kExitOk;
}

int cmd_curves(const RunConfig& cfg, std::ostream& log) {
  const Model model = build_model(cfg);
  const fs::path dir = ensure_output_dir(cfg);
  const ValueTable table = solve_table(cfg, model);
  const auto& nodes = table.grid.nodes;

  std::ostringstream fb, cmp;
  fb << "gamma,h_star\n";
  cmp << "gamma,v,v_no\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    fb << fmt17(nodes[i]) << ',' << fmt17(table.h_star[i]) << '\n';
    cmp << fmt17(nodes[i]) << ',' << fmt17(table.v[i]) << ',' << fmt17(no_acquisition_value(nodes[i], model).value)
        << '\n';
  }
  write_text(dir / "feedback.csv", fb.str());
  write_text(dir / "comparison.csv", cmp.str());

  std::vector<double> starts = cfg.numerics.curve_gamma0;
  if (starts.empty()) starts = {0.0, 0.5 * model.coeffs.gamma_max, model.coeffs.gamma_max};
  // The stability guard of the integrator caps the step for very large h_max.
  const double dt =
      std::min(cfg.numerics.ode_dt, 0.1 / (model.params.sigma1_bar_sq() + model.coeffs.h_max));
  const std::vector<double> times = uniform_time_grid(cfg.numerics.curve_horizon, dt);
  const RateSchedule policy = RateSchedule::feedback([&table](double g) { return feedback_map(table, g); });
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const VariancePath path = integrate_variance(starts[k], policy, times, model);
    std::ostringstream os;
    os << "t,gamma_star,gamma_uncontrolled,h_star\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
      os << fmt17(times[i]) << ',' << fmt17(path.values[i]) << ','
         << fmt17(solve_constant_rate(starts[k], 0.0, times[i], model.params)) << ','
         << fmt17(feedback_map(table, path.values[i])) << '\n';
    }
    const std::string name = k == 0 ? "trajectories.csv" : "trajectories_" + std::to_string(k) + ".csv";
    write_text(dir / name, os.str());
  }
  log << "curves: " << nodes.size() << " nodes, " << starts.size() << " trajectories\n";
  return kExitOk;
}

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidParams:
    case ErrorCode::CostRangeError:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Optimal information acquisition: solvers, equilibrium analysis and Monte Carlo checks"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string policy = "all";
  std::size_t dump = 0;
  std::vector<std::string> param_names;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON configuration file")->required();
    sub->add_option("--set", sets, "Override one field, e.g. --set model.sigma2=0.5")->take_all();
    sub->add_option("--out", out_dir, "Output directory (overrides outputs.directory)");
  };
  CLI::App* solve = app.add_subcommand("solve", "Solve the reduced HJB, write value.csv and summary.json");
  CLI::App* equil = app.add_subcommand("equilibrium", "Solve the stationary point, write equilibrium.json");
  CLI::App* sens = app.add_subcommand("sensitivity", "Equilibrium sensitivities, write sensitivity.json");
  CLI::App* simu = app.add_subcommand("simulate", "Monte Carlo policy costs, write mc.json and sample paths");
  CLI::App* curv = app.add_subcommand("curves", "Feedback map, value comparison and trajectories");
  for (auto* s : {solve, equil, sens, simu, curv}) add_common(s);
  sens->add_option("--params", param_names, "Subset of sigma1, sigma2_sq, kappa, alpha (default all)")
      ->delimiter(',');
  simu->add_option("--policy", policy,
                   "all, optimal, no_acquisition, full_observation or constant:<rate>");
  simu->add_option("--dump-paths", dump, "Number of sample paths to write per policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const std::optional<std::string> out = out_dir.empty() ? std::nullopt : std::optional<std::string>(out_dir);
    const RunConfig cfg = load_config(config_file, sets, out);
    if (solve->parsed()) return cmd_solve(cfg, std::cout);
    if (equil->parsed()) return cmd_equilibrium(cfg, std::cout);
    if (sens->parsed()) {
      std::vector<SensitivityParameter> ps;
      if (param_names.empty()) {
        ps = {SensitivityParameter::Sigma1, SensitivityParameter::Sigma2Sq, SensitivityParameter::Kappa,
              SensitivityParameter::Alpha};
      }
      for (const auto& n : param_names) {
        auto p = parse_sensitivity_parameter(n);
        if (!p) fail(ErrorCode::ConfigError, "--params: unknown parameter '" + n + "'");
        ps.push_back(*p);
      }
      return cmd_sensitivity(cfg, ps, std::cout);
    }
    if (simu->parsed()) return cmd_simulate(cfg, policy, dump, std::cout);
    return cmd_curves(cfg, std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace infoacq::cli
