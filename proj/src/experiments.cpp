#include "hyperlb/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "hyperlb/ctmc.hpp"
#include "hyperlb/fixed_point.hpp"
#include "hyperlb/fluid_async.hpp"
#include "hyperlb/fluid_sync.hpp"
#include "hyperlb/trajectory_io.hpp"

namespace hyperlb {

namespace {

const std::vector<double> kDeltaGrid = {0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 1.0, 1.4, 2.1};

// Coordinates compared between fluid and simulated trajectories.
double max_coordinate_gap(const Triangle& fluid, const Snapshot& sim) {
  const DerivedFunctionals d = derive(fluid);
  double worst = 0.0;
  for (int k = 0; k <= 2; ++k) {
    const double v = k < static_cast<int>(d.v.size()) ? d.v[k] : 0.0;
    const double w = k < static_cast<int>(d.w.size()) ? d.w[k] : 0.0;
    worst = std::max({worst, std::abs(v - sim.v(k)), std::abs(w - sim.w(k))});
  }
  return worst;
}

std::size_t grid_index(const std::vector<double>& grid, double t) {
  const auto it = std::lower_bound(grid.begin(), grid.end(), t - 1e-9);
  if (it == grid.end() || std::abs(*it - t) > 1e-9) throw std::logic_error("time missing from fluid grid");
  return static_cast<std::size_t>(it - grid.begin());
}

void check(ValidateReport& report, const std::string& name, double value, double threshold) {
  const bool ok = value <= threshold;
  report.pass = report.pass && ok;
  report.checks.push_back({{"name", name}, {"value", value}, {"threshold", threshold}, {"pass", ok}});
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::messages_versus_wait() {
  ExperimentConfig c;
  c.name = "messages-versus-wait";
  c.params = {200, 0.7, 1.0};
  c.policies = {"sujsq-det", "sujsq-exp", "aujsq-det", "aujsq-exp", "sujsq-det-idle",
                "jiq-p",     "jsq-d",     "jiq",       "random",    "round-robin"};
  for (const char* family : {"sujsq-det", "sujsq-exp", "aujsq-det", "aujsq-exp", "sujsq-det-idle"}) {
    c.sweep_by_family[family] = kDeltaGrid;
  }
  c.sweep_by_family["jiq-p"] = {0.05, 0.1, 0.2, 0.35, 0.5, 0.75};
  c.sweep_by_family["jsq-d"] = {1, 2, 3, 5};
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  c.name = doc.value("name", c.name);
  if (doc.contains("params")) {
    const auto& p = doc.at("params");
    c.params.n_servers = p.value("n_servers", c.params.n_servers);
    c.params.lambda = p.value("lambda", c.params.lambda);
    c.params.delta = p.value("delta", c.params.delta);
  }
  c.policies = doc.value("policies", c.policies);
  c.sweep = doc.value("sweep", c.sweep);
  if (doc.contains("sweep_by_family")) {
    c.sweep_by_family = doc.at("sweep_by_family").get<std::map<std::string, std::vector<double>>>();
  }
  c.runs = doc.value("runs", c.runs);
  c.horizon = doc.value("horizon", c.horizon);
  c.warmup = doc.value("warmup", c.warmup);
  c.seed = doc.value("seed", c.seed);
  c.output_dir = doc.value("output_dir", c.output_dir);
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"name", name},
      {"params", {{"n_servers", params.n_servers}, {"lambda", params.lambda}, {"delta", params.delta}}},
      {"policies", policies},
      {"sweep", sweep},
      {"sweep_by_family", sweep_by_family},
      {"runs", runs},
      {"horizon", horizon},
      {"warmup", warmup},
      {"seed", seed},
      {"output_dir", output_dir},
  };
}

void ExperimentConfig::validate() const {
  params.validate();
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (!(horizon > warmup && warmup >= 0.0)) throw std::invalid_argument("need 0 <= warmup < horizon");
  auto positive = [](const std::vector<double>& xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return x > 0.0; });
  };
  if (!positive(sweep)) throw std::invalid_argument("sweep values must be positive");
  for (const auto& [family, values] : sweep_by_family) {
    parse_family(family);
    if (!positive(values)) throw std::invalid_argument("sweep values for " + family + " must be positive");
  }
  expand();
}

std::vector<PolicySpec> ExperimentConfig::expand() const {
  std::vector<PolicySpec> out;
  for (const auto& text : policies) {
    if (text.find(':') != std::string::npos) {
      out.push_back(PolicySpec::parse(text));
      continue;
    }
    const PolicyKind kind = parse_family(text);
    if (!family_has_parameter(kind)) {
      out.push_back(PolicySpec::with_parameter(kind, 0.0));
      continue;
    }
    const auto it = sweep_by_family.find(text);
    const auto& values = it != sweep_by_family.end() ? it->second : sweep;
    if (values.empty()) throw std::invalid_argument("no sweep values for " + text);
    for (double value : values) out.push_back(PolicySpec::with_parameter(kind, value));
  }
  return out;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<SweepRow> rows;
  for (const PolicySpec& spec : config.expand()) {
    SweepRow row;
    row.policy = spec.family();
    row.param = spec.parameter();
    try {
      SimConfig sim;
      sim.params = config.params;
      sim.policy = spec;
      sim.horizon = config.horizon;
      sim.warmup = config.warmup;
      sim.seed = config.seed;
      const ReplicationResult res = run_replications(sim, config.runs);
      row.msgs_per_job = res.mean.msgs_per_job;
      row.mean_wait = res.mean.mean_wait;
      row.mean_queue = res.mean.mean_queue_per_server;
      row.ci_halfwidth = res.wait_ci_halfwidth;
    } catch (const std::exception& e) {
      row.msgs_per_job = row.mean_wait = row.mean_queue = row.ci_halfwidth = std::nan("");
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.policy != b.policy) return a.policy < b.policy;
    return a.param.value_or(-1.0) < b.param.value_or(-1.0);
  });
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "policy,param,msgs_per_job,mean_wait,mean_queue,ci_halfwidth\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << (r.param ? format_number(*r.param) : "") << ',' << format_number(r.msgs_per_job) << ','
        << format_number(r.mean_wait) << ',' << format_number(r.mean_queue) << ',' << format_number(r.ci_halfwidth)
        << '\n';
  }
}

// ---------------------------------------------------------------------------

FluidState sync_fixed_point(double lambda, int jmax) {
  if (jmax < 1) throw std::invalid_argument("jmax must be >= 1");
  Triangle y(jmax);
  y(0, 0) = 1.0 - lambda;
  y(1, 1) = lambda;
  return FluidState(std::move(y), FluidState::Normalize::no);
}

FluidResult cmd_fluid(const FluidRequest& req) {
  ModelParams{1, req.lambda, req.delta}.validate();
  const int jmax = req.jmax > 0 ? req.jmax : default_jmax(req.lambda, req.delta);

  FluidState y0;
  if (req.y0 == "empty") {
    y0 = FluidState::empty_system(jmax);
  } else if (req.y0 == "fixed-point") {
    y0 = req.kind == FluidKind::sync ? sync_fixed_point(req.lambda, jmax) : y_star(req.lambda, req.delta, jmax).y_star;
  } else {
    std::ifstream in(req.y0);
    if (!in) throw std::invalid_argument("cannot open initial state file " + req.y0);
    y0 = read_state_csv(in, jmax);
  }

  FluidResult out;
  if (req.kind == FluidKind::sync) {
    SyncOptions opt;
    opt.dt = req.dt;
    opt.sample_dt = req.grid_dt;
    SyncFluidRun run = integrate_sync(y0, req.lambda, req.delta, req.t_end, opt);
    out.grid = std::move(run.grid);
    out.states = std::move(run.states);
  } else {
    AsyncOptions opt;
    opt.dt = req.dt;
    opt.sample_dt = req.grid_dt;
    AsyncRun run = integrate_async(y0, req.lambda, req.delta, req.t_end, opt);
    out.grid = std::move(run.grid);
    out.states = std::move(run.states);
  }

  if (req.overlay_runs > 0) {
    if (req.y0 != "empty") throw std::invalid_argument("the simulation overlay starts from an empty system");
    if (!(req.grid_dt > 0.0)) throw std::invalid_argument("the simulation overlay needs a positive grid step");
    SimConfig sim;
    sim.params = {req.overlay_servers, req.lambda, req.delta};
    sim.policy = PolicySpec::with_parameter(
        req.kind == FluidKind::sync ? PolicyKind::sujsq_det : PolicyKind::aujsq_exp, req.delta);
    sim.horizon = req.t_end;
    sim.warmup = 0.0;
    sim.seed = req.seed;
    sim.trajectory_grid = req.grid_dt;
    out.overlay = run_replications(sim, req.overlay_runs).mean.trajectory;
  }
  return out;
}

nlohmann::json cmd_fixed_point(double lambda, double delta) {
  const FixedPoint fp = y_star(lambda, delta);
  nlohmann::json entries = nlohmann::json::array();
  const Triangle& y = fp.y_star.data();
  for (int j = 0; j <= y.jmax(); ++j) {
    for (int i = 0; i <= j; ++i) {
      if (y(i, j) != 0.0) entries.push_back({{"i", i}, {"j", j}, {"y", y(i, j)}});
    }
  }
  return {
      {"lambda", lambda},     {"delta", delta},       {"m_star", fp.m_star},
      {"nu", fp.nu},          {"q_tilde", fp.q_tilde}, {"y_star", entries},
      {"residual", fp.residual}, {"m_star_det", m_star_det(lambda, delta)},
  };
}

nlohmann::json cmd_fixed_point_sweep(double lambda, const std::vector<double>& deltas) {
  nlohmann::json rows = nlohmann::json::array();
  for (double delta : deltas) {
    const FixedPoint fp = y_star(lambda, delta);
    rows.push_back({
        {"delta", delta},
        {"q_tilde", fp.q_tilde},
        {"lower", fp.m_star - lambda / delta},
        {"upper", fp.m_star + 1.0 - lambda / delta},
        {"m_star", fp.m_star},
    });
  }
  return rows;
}

// ---------------------------------------------------------------------------

ValidateReport cmd_validate(const ValidateBudget& budget) {
  ValidateReport report;
  const double scale = budget.tolerance_scale;
  const double lambda = 0.7;

  {
    const int jmax = default_jmax(lambda, 2.5);
    const FluidState ref = sync_fixed_point(lambda, jmax);
    const SyncFluidRun run = integrate_sync(ref, lambda, 2.5, 20 / 2.5);
    double worst = 0.0;
    for (const auto& s : run.post_jump) worst = std::max(worst, sup_distance(s.data(), ref.data()));
    check(report, "sync_fixed_point_cycle", worst, 1e-6 * scale);
  }

  for (auto [l, d] : {std::pair{0.7, 0.85}, {0.7, 2.5}, {0.5, 1.0}}) {
    const std::string tag = "(" + format_number(l) + "," + format_number(d) + ")";
    const FixedPoint fp = y_star(l, d);
    check(report, "async_fixed_point_residual" + tag, fp.residual, 1e-8 * scale);
    const AsyncRun run = integrate_async(FluidState::empty_system(fp.y_star.jmax()), l, d, 200.0);
    check(report, "async_convergence" + tag, sup_distance(run.states.back().data(), fp.y_star.data()), 1e-4 * scale);
  }

  {
    const SyncAnalysis sa = s_of(lambda, 1 / 0.85);
    int scan = 0;
    for (int level = 2;; ++level) {
      if (lambda / 0.85 < sync_sigma(level, lambda, 1 / 0.85)) {
        scan = level;
        break;
      }
    }
    check(report, "queue_bound_scan_mismatch", std::abs(sa.s_star - scan), 0.0);
    int disagreements = 0;
    for (int a = 1; a <= 10; ++a) {
      for (int b = 1; b <= 10; ++b) {
        const double l = 0.09 * a;
        const double d = 0.3 * b;
        if (std::abs(m_star_closed_form(l, d) - m_star_min_set(l, d)) > 0) ++disagreements;
      }
    }
    check(report, "m_star_form_disagreements", disagreements, 0.0);
  }

  for (FluidKind kind : {FluidKind::sync, FluidKind::async}) {
    FluidRequest req;
    req.kind = kind;
    req.lambda = lambda;
    req.delta = 0.85;
    req.t_end = 10.0;
    req.grid_dt = 0.05;
    req.overlay_runs = budget.fluid_runs;
    req.overlay_servers = budget.fluid_servers;
    req.seed = budget.seed;
    const FluidResult res = cmd_fluid(req);
    double worst = 0.0;
    for (const auto& snap : res.overlay) {
      worst = std::max(worst, max_coordinate_gap(res.states[grid_index(res.grid, snap.t)].data(), snap));
    }
    check(report, std::string("fluid_vs_simulation_") + (kind == FluidKind::sync ? "sync" : "async"), worst,
          0.05 * scale);
  }

  {
    const ModelParams params{2, lambda, 0.85};
    const CappedChain oracle = solve_with_loss_below(params, PolicyKind::aujsq_exp, 1e-5);
    const OracleMetrics om = oracle_metrics(oracle.chain, oracle.pi);
    SimConfig sim;
    sim.params = params;
    sim.policy = PolicySpec::with_parameter(PolicyKind::aujsq_exp, 0.85);
    sim.horizon = budget.ctmc_horizon;
    sim.warmup = 0.01 * budget.ctmc_horizon;
    sim.seed = budget.seed;
    const MetricsRecord rec = run(sim);
    check(report, "ctmc_histogram_tv", total_variation(rec.queue_len_hist, om.queue_marginal), 0.02 * scale);
    check(report, "ctmc_wait_relative_error", std::abs(rec.mean_wait - om.mean_wait) / om.mean_wait, 0.03 * scale);
  }

  {
    SimConfig sim;
    sim.params = {200, lambda, 0.7};
    sim.policy = PolicySpec::with_parameter(PolicyKind::sujsq_det, 0.7);
    sim.horizon = budget.message_horizon;
    sim.seed = budget.seed;
    const MetricsRecord rec = run(sim);
    check(report, "sujsq_det_msgs_per_job_gap", std::abs(rec.msgs_per_job - 1.0), 0.02 * scale);
  }
  return report;
}

}  // namespace hyperlb
