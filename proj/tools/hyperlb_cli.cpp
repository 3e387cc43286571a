// Command-line front end: sweep, fluid, fixed-point, simulate, validate.

#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hyperlb/experiments.hpp"
#include "hyperlb/trajectory_io.hpp"

namespace {

using nlohmann::json;

/// Values from a --config JSON document apply to every option the user did
/// not pass on the command line.
class ConfigBindings {
 public:
  template <class T>
  CLI::Option* add(CLI::App& app, const std::string& flag, T& target, const std::string& key, const std::string& help) {
    CLI::Option* opt = app.add_option(flag, target, help)->capture_default_str();
    apply_.push_back([opt, &target, key](const json& doc) {
      if (opt->count() == 0 && doc.contains(key)) target = doc.at(key).get<T>();
    });
    return opt;
  }

  void apply(const json& doc) const {
    for (const auto& f : apply_) f(doc);
  }

 private:
  std::vector<std::function<void(const json&)>> apply_;
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return json::parse(in);
}

/// Writes to `path`, or to stdout for "-".
void emit(const std::string& path, const std::function<void(std::ostream&)>& write) {
  if (path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Load balancing with sparse queue-length updates: simulation, fluid limits, fixed points"};
  app.require_subcommand(1);
  int exit_code = 0;

  // sweep -------------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "Mean waiting time versus messages per job (CSV)");
  std::string sweep_config, sweep_out = "-";
  std::vector<std::string> sweep_policies;
  std::vector<double> sweep_values;
  int sweep_n = 200, sweep_runs = 10;
  double sweep_lambda = 0.7, sweep_horizon = 5000, sweep_warmup = 1000;
  std::uint64_t sweep_seed = 1;
  sweep->add_option("--config", sweep_config, "Experiment manifest (JSON); flags override it");
  auto* sw_policy = sweep->add_option("--policy", sweep_policies, "Family or family:param, repeatable");
  auto* sw_values = sweep->add_option("--sweep", sweep_values, "Parameter values for families given without one");
  auto* sw_lambda = sweep->add_option("--lambda", sweep_lambda, "Arrival rate per server")->capture_default_str();
  auto* sw_n = sweep->add_option("--n", sweep_n, "Number of servers")->capture_default_str();
  auto* sw_runs = sweep->add_option("--runs", sweep_runs, "Replications per point")->capture_default_str();
  auto* sw_horizon = sweep->add_option("--horizon", sweep_horizon, "Simulated time per run")->capture_default_str();
  auto* sw_warmup = sweep->add_option("--warmup", sweep_warmup, "Discarded initial time")->capture_default_str();
  auto* sw_seed = sweep->add_option("--seed", sweep_seed, "Master seed")->capture_default_str();
  sweep->add_option("--out", sweep_out, "CSV path, - for stdout");
  sweep->callback([&] {
    hyperlb::ExperimentConfig cfg =
        sweep_config.empty() ? hyperlb::ExperimentConfig::messages_versus_wait()
                             : hyperlb::ExperimentConfig::from_json(load_json(sweep_config));
    if (sw_policy->count()) {
      cfg.policies = sweep_policies;
      cfg.sweep_by_family.clear();
    }
    if (sw_values->count()) cfg.sweep = sweep_values;
    if (sw_lambda->count()) cfg.params.lambda = sweep_lambda;
    if (sw_n->count()) cfg.params.n_servers = sweep_n;
    if (sw_runs->count()) cfg.runs = sweep_runs;
    if (sw_horizon->count()) cfg.horizon = sweep_horizon;
    if (sw_warmup->count()) cfg.warmup = sweep_warmup;
    if (sw_seed->count()) cfg.seed = sweep_seed;
    const auto rows = hyperlb::cmd_sweep(cfg);
    emit(sweep_out, [&](std::ostream& out) { hyperlb::write_sweep_csv(out, rows); });
    for (const auto& r : rows) {
      if (r.error.empty()) continue;
      std::cerr << "sweep point " << r.policy << " failed: " << r.error << '\n';
      exit_code = 2;
    }
  });

  // fluid -------------------------------------------------------------------
  auto* fluid = app.add_subcommand("fluid", "Fluid-limit trajectory (CSV t,i,j,y)");
  ConfigBindings fluid_cfg;
  std::string fluid_config, fluid_kind = "sync", fluid_out = "-", overlay_out;
  hyperlb::FluidRequest freq;
  fluid->add_option("--config", fluid_config, "JSON document with the option names as keys");
  fluid_cfg.add(*fluid, "--kind", fluid_kind, "kind", "sync or async")->check(CLI::IsMember({"sync", "async"}));
  fluid_cfg.add(*fluid, "--lambda", freq.lambda, "lambda", "Arrival rate per server");
  fluid_cfg.add(*fluid, "--delta", freq.delta, "delta", "Update frequency per server");
  fluid_cfg.add(*fluid, "--t-end", freq.t_end, "t_end", "Integration horizon");
  fluid_cfg.add(*fluid, "--y0", freq.y0, "y0", "empty, fixed-point or a trajectory CSV");
  fluid_cfg.add(*fluid, "--dt", freq.dt, "dt", "Integration step (0: automatic)");
  fluid_cfg.add(*fluid, "--grid-dt", freq.grid_dt, "grid_dt", "Output spacing");
  fluid_cfg.add(*fluid, "--jmax", freq.jmax, "jmax", "Estimate truncation (0: automatic)");
  fluid_cfg.add(*fluid, "--runs", freq.overlay_runs, "runs", "Simulation replications to overlay (0: none)");
  fluid_cfg.add(*fluid, "--n", freq.overlay_servers, "n", "Servers in the overlaid simulation");
  fluid_cfg.add(*fluid, "--seed", freq.seed, "seed", "Master seed for the overlay");
  fluid->add_option("--out", fluid_out, "CSV path, - for stdout");
  fluid->add_option("--overlay-out", overlay_out, "CSV path for the simulation overlay");
  fluid->callback([&] {
    if (!fluid_config.empty()) fluid_cfg.apply(load_json(fluid_config));
    freq.kind = fluid_kind == "sync" ? hyperlb::FluidKind::sync : hyperlb::FluidKind::async;
    if (freq.overlay_runs > 0 && overlay_out.empty()) throw CLI::ValidationError("--runs needs --overlay-out");
    const auto res = hyperlb::cmd_fluid(freq);
    emit(fluid_out, [&](std::ostream& out) { hyperlb::write_trajectory_csv(out, res.grid, res.states); });
    if (!overlay_out.empty()) {
      emit(overlay_out, [&](std::ostream& out) { hyperlb::write_trajectory_csv(out, res.overlay); });
    }
  });

  // fixed-point ---------------------------------------------------------------
  auto* fixed = app.add_subcommand("fixed-point", "Stationary point of the asynchronous fluid limit (JSON)");
  ConfigBindings fixed_cfg;
  std::string fixed_config, fixed_out = "-";
  double fp_lambda = 0.7, fp_delta = 0.85;
  std::vector<double> fp_sweep;
  fixed->add_option("--config", fixed_config, "JSON document with the option names as keys");
  fixed_cfg.add(*fixed, "--lambda", fp_lambda, "lambda", "Arrival rate per server");
  fixed_cfg.add(*fixed, "--delta", fp_delta, "delta", "Update frequency per server");
  fixed_cfg.add(*fixed, "--sweep", fp_sweep, "sweep", "Delta values; emits the q-tilde curve instead");
  fixed->add_option("--out", fixed_out, "JSON path, - for stdout");
  fixed->callback([&] {
    if (!fixed_config.empty()) fixed_cfg.apply(load_json(fixed_config));
    const json doc = fp_sweep.empty() ? hyperlb::cmd_fixed_point(fp_lambda, fp_delta)
                                      : hyperlb::cmd_fixed_point_sweep(fp_lambda, fp_sweep);
    emit(fixed_out, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
  });

  // simulate ----------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Discrete-event simulation of one scheme (JSON)");
  ConfigBindings sim_cfg;
  std::string sim_config, sim_policy = "sujsq-det:0.85", sim_out = "-", traj_out;
  hyperlb::SimConfig sc;
  sc.params = {1000, 0.7, 1.0};
  double sim_warmup = -1.0, sim_grid = 0.0;
  int sim_runs = 1;
  simulate->add_option("--config", sim_config, "JSON document with the option names as keys");
  sim_cfg.add(*simulate, "--policy", sim_policy, "policy", "family[:param]");
  sim_cfg.add(*simulate, "--lambda", sc.params.lambda, "lambda", "Arrival rate per server");
  sim_cfg.add(*simulate, "--n", sc.params.n_servers, "n", "Number of servers");
  sim_cfg.add(*simulate, "--horizon", sc.horizon, "horizon", "Simulated time");
  sim_cfg.add(*simulate, "--warmup", sim_warmup, "warmup", "Discarded initial time (negative: 20% of horizon)");
  sim_cfg.add(*simulate, "--seed", sc.seed, "seed", "Master seed");
  sim_cfg.add(*simulate, "--runs", sim_runs, "runs", "Replications");
  sim_cfg.add(*simulate, "--grid-dt", sim_grid, "grid_dt", "Trajectory spacing (0: no trajectory)");
  simulate->add_option("--out", sim_out, "JSON path, - for stdout");
  simulate->add_option("--trajectory-out", traj_out, "CSV path for the averaged trajectory");
  simulate->add_flag("--push-messages", sc.push_based_messages, "Count update polls as request plus reply");
  simulate->add_flag("--audit", sc.audit, "Check model invariants after every event");
  simulate->callback([&] {
    if (!sim_config.empty()) sim_cfg.apply(load_json(sim_config));
    sc.policy = hyperlb::PolicySpec::parse(sim_policy);
    if (sc.policy.hyper_scalable()) sc.params.delta = sc.policy.delta;
    if (sim_warmup >= 0.0) sc.warmup = sim_warmup;
    if (sim_grid > 0.0) sc.trajectory_grid = sim_grid;
    const auto res = hyperlb::run_replications(sc, sim_runs);
    json doc = hyperlb::to_json(res);
    doc["policy"] = sc.policy.to_string();
    emit(sim_out, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
    if (!traj_out.empty()) {
      emit(traj_out, [&](std::ostream& out) { hyperlb::write_trajectory_csv(out, res.mean.trajectory); });
    }
  });

  // validate ----------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Oracle, fluid-versus-simulation and invariant checks (JSON)");
  ConfigBindings val_cfg;
  std::string val_config, val_out = "-";
  hyperlb::ValidateBudget budget;
  validate->add_option("--config", val_config, "JSON document with the option names as keys");
  val_cfg.add(*validate, "--n", budget.fluid_servers, "n", "Servers in the fluid comparison");
  val_cfg.add(*validate, "--runs", budget.fluid_runs, "runs", "Replications in the fluid comparison");
  val_cfg.add(*validate, "--horizon", budget.ctmc_horizon, "horizon", "Simulated time for the Markov-chain comparison");
  val_cfg.add(*validate, "--seed", budget.seed, "seed", "Master seed");
  val_cfg.add(*validate, "--tolerance-scale", budget.tolerance_scale, "tolerance_scale",
              "Multiplies every tolerance; < 1 tightens");
  validate->add_option("--out", val_out, "JSON path, - for stdout");
  validate->callback([&] {
    if (!val_config.empty()) val_cfg.apply(load_json(val_config));
    const auto report = hyperlb::cmd_validate(budget);
    const json doc = {{"pass", report.pass}, {"checks", report.checks}};
    emit(val_out, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
    if (!report.pass) exit_code = 1;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}
