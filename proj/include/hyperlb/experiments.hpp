#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperlb/model.hpp"
#include "hyperlb/policy.hpp"
#include "hyperlb/simulator.hpp"

namespace hyperlb {

/// Sweep manifest. The JSON form uses the field names below; `policies`
/// holds family names ("sujsq-det") or fully specified policies ("jsq-d:2").
struct ExperimentConfig {
  std::string name = "sweep";
  ModelParams params{200, 0.7, 1.0};
  std::vector<std::string> policies;
  std::vector<double> sweep;  // values for families without their own list
  std::map<std::string, std::vector<double>> sweep_by_family;
  int runs = 10;
  double horizon = 5000.0;
  double warmup = 1000.0;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  /// Every scheme over a parameter grid spanning sparse to frequent messaging.
  static ExperimentConfig messages_versus_wait();
  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  void validate() const;
  /// Every (policy, parameter) point of the sweep.
  std::vector<PolicySpec> expand() const;
};

struct SweepRow {
  std::string policy;
  std::optional<double> param;
  double msgs_per_job = 0.0;
  double mean_wait = 0.0;
  double mean_queue = 0.0;
  double ci_halfwidth = 0.0;  // of mean_wait, normal approximation over runs
  std::string error;          // set when the simulation of this point failed
};

/// Runs every sweep point; failures are recorded per row. Rows come back
/// sorted by (policy, param).
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

enum class FluidKind { sync, async };

struct FluidRequest {
  FluidKind kind = FluidKind::sync;
  double lambda = 0.7;
  double delta = 0.85;
  double t_end = 20.0;
  std::string y0 = "empty";  // "empty", "fixed-point" or a trajectory CSV path
  double dt = 0.0;
  double grid_dt = 0.05;
  int jmax = 0;  // 0 selects default_jmax
  // Simulation overlay (sujsq-det for sync, aujsq-exp for async), from empty.
  int overlay_runs = 0;
  int overlay_servers = 1000;
  std::uint64_t seed = 1;
};

struct FluidResult {
  std::vector<double> grid;
  std::vector<FluidState> states;
  std::vector<Snapshot> overlay;  // replication average on the same grid
};

FluidResult cmd_fluid(const FluidRequest& request);

/// y_{0,0} = 1 - lambda, y_{1,1} = lambda: the state the synchronized fluid
/// limit returns to at every epoch when delta > lambda / (1 - lambda).
FluidState sync_fixed_point(double lambda, int jmax);

nlohmann::json cmd_fixed_point(double lambda, double delta);
/// (delta, q_tilde) rows with the bounds m* - lambda/delta and m* + 1 - lambda/delta.
nlohmann::json cmd_fixed_point_sweep(double lambda, const std::vector<double>& deltas);

struct ValidateBudget {
  int fluid_servers = 1000;
  int fluid_runs = 10;
  double ctmc_horizon = 200'000.0;
  double message_horizon = 1000.0;
  // Multiplies every tolerance; values < 1 tighten the checks.
  double tolerance_scale = 1.0;
  std::uint64_t seed = 1;
};

struct ValidateReport {
  nlohmann::json checks = nlohmann::json::array();
  bool pass = true;
};

ValidateReport cmd_validate(const ValidateBudget& budget);

}  // namespace hyperlb
