#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infoacq/infoacq.hpp"

namespace infoacq::cli {

inline constexpr const char* kSchemaVersion = "infoacq-output/1";

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct CostConfig {
  std::string kind = "quadratic";  // quadratic | power | affine_quadratic
  double zeta = 1e-3;
  double epsilon = 1.0;
  double linear = 0.0;

  CostFunction build() const;
};

struct NumericsConfig {
  double gamma_max_factor = kDefaultGammaMaxFactor;
  std::optional<double> gamma_max;  // absolute override of the factor rule
  std::size_t grid_n = 4001;
  double hjb_dt = 0.0;  // 0 = automatic
  double hjb_tol = 1e-10;
  std::string hjb_scheme = "second_order";
  double ode_dt = 1e-3;
  double curve_horizon = 10.0;
  std::vector<double> curve_gamma0;  // empty = {0, gamma_max/2, gamma_max}
  SimConfig sim;
};

struct RunConfig {
  ModelParams model;
  CostConfig cost;
  NumericsConfig numerics;
  std::string output_directory = "out";
};

// Throws Error(ConfigError) with a dotted field path on any problem.
RunConfig parse_config(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

// "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Reads the file, applies overrides and the optional output directory, and parses.
RunConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides,
                      const std::optional<std::string>& out_dir);

Model build_model(const RunConfig& cfg);
ValueIterationOptions vi_options(const RunConfig& cfg);
ValueTable solve_table(const RunConfig& cfg, const Model& model);

// Each command writes into cfg.output_directory and returns an exit code.
// Numerical failures propagate as Error; run_command maps them to exit codes.
int cmd_solve(const RunConfig& cfg, std::ostream& log);
int cmd_equilibrium(const RunConfig& cfg, std::ostream& log);
int cmd_sensitivity(const RunConfig& cfg, const std::vector<SensitivityParameter>& params, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, const std::string& policy, std::size_t dump_paths, std::ostream& log);
int cmd_curves(const RunConfig& cfg, std::ostream& log);

// Entry point used by the executable.
int run(int argc, char** argv);

}  // namespace infoacq::cli
