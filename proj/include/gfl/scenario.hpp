#pragma once

#include <filesystem>

#include "gfl/space.hpp"

namespace gfl {

// Config schema (version 1), strict: unknown keys are rejected.
// {
//   "schema": 1,
//   "scenario": "euclidean-torus" | "weighted-interval" | "ou"
//               | "log-concave-1d",
//   "space": {"nodes": int, "min": double, "length": double},     // optional
//   "potential": {"family": "zero"|"quadratic"|"quartic"|"cosine",
//                 "coefficient": double},                          // optional
//   "curvature": double,            // declared K, checked for consistency
//   "field": { derivation family block },                          // optional
//   "experiments": ["be2", ...],
//   "T": double, "dt": double (0 = from CFL), "seed": uint64,
//   "particles": int, "output": "dir"
// }
struct ScenarioConfig {
  std::string scenario;
  int nodes = 0;            // 0 = scenario default
  double axis_min = 0.0, axis_len = 0.0;  // 0 length = scenario default
  std::string potential_family;
  double potential_coefficient = 1.0;
  double curvature = 0.0;
  bool curvature_given = false;
  nlohmann::json field;     // empty = scenario default
  std::vector<std::string> experiments;
  double T = 1.0;
  double dt = 0.0;          // 0 = derived from CFL
  uint64_t seed = 20240811u;
  int particles = 20000;
  std::string output;

  nlohmann::json canonical() const;  // sorted, defaults filled
};

ScenarioConfig load_config(const std::string& text);
ScenarioConfig load_config_file(const std::filesystem::path& path);
std::string config_hash(const ScenarioConfig& config);

struct ExperimentResult {
  std::string name;
  bool pass = false;
  nlohmann::json metrics;   // defects, tolerances, constants
  double seconds = 0.0;
  std::string note;
};

struct ScenarioResult {
  std::string scenario;
  std::string hash;
  uint64_t seed = 0;
  int truncation_dimension = 1;
  bool all_pass = true;
  std::vector<ExperimentResult> experiments;
  std::string started, finished;

  nlohmann::json json() const;
};

// Builds the scenario's space (and validates the declared K against the
// potential family).
Space scenario_space(const ScenarioConfig& config);

// Runs every declared experiment; check failures are recorded and the run
// continues, numerical failures (std::runtime_error) abort.
ScenarioResult run_scenario(const ScenarioConfig& config, int jobs = 1);

// Heat semigroup on a gaussian-weight space by Gauss-Hermite quadrature of
// the scaling identity P_t f(x) = E[f(e^{-t}x + sqrt(1-e^{-2t}) Y)].
Field mehler_reference(const Space& space,
                       const std::function<double(double)>& f, double t,
                       int nodes = 32);

// result.json plus per-experiment CSV tables under dir.
std::vector<std::filesystem::path> write_scenario_bundle(
    const ScenarioResult& result, const std::filesystem::path& dir);

}  // namespace gfl
