#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "hyperlb/experiments.hpp"
#include "hyperlb/fixed_point.hpp"
#include "hyperlb/trajectory_io.hpp"

using namespace hyperlb;
using nlohmann::json;

namespace {

ExperimentConfig small_sweep() {
  ExperimentConfig cfg;
  cfg.params = {20, 0.7, 1.0};
  cfg.policies = {"random", "jsq-d", "sujsq-det"};
  cfg.sweep_by_family["jsq-d"] = {2, 1};
  cfg.sweep = {1.4, 0.35};
  cfg.runs = 2;
  cfg.horizon = 200;
  cfg.warmup = 50;
  return cfg;
}

}  // namespace

TEST_CASE("config survives a JSON round trip") {
  const ExperimentConfig cfg = small_sweep();
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.params.n_servers == 20);
  CHECK(back.sweep_by_family.at("jsq-d").size() == 2);
}

TEST_CASE("config validation") {
  auto cfg = small_sweep();
  CHECK_NOTHROW(cfg.validate());
  cfg.sweep = {0.5, -1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_sweep();
  cfg.policies.push_back("fastest");
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_sweep();
  cfg.warmup = cfg.horizon;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("expansion gives one point per parameter value") {
  const auto points = small_sweep().expand();
  CHECK(points.size() == 5);
  const auto preset = ExperimentConfig::messages_versus_wait();
  CHECK_NOTHROW(preset.validate());
  CHECK(preset.params.lambda == 0.7);
  CHECK(preset.params.n_servers == 200);
}

TEST_CASE("sweep rows are sorted with a fixed header") {
  const auto rows = cmd_sweep(small_sweep());
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].policy == "jsq-d");
  CHECK(*rows[0].param == 1.0);
  CHECK(*rows[1].param == 2.0);
  CHECK(rows[1].msgs_per_job == 4.0);
  CHECK(rows[2].policy == "random");
  CHECK_FALSE(rows[2].param.has_value());
  CHECK(rows[3].policy == "sujsq-det");
  CHECK(*rows[3].param == 0.35);
  for (const auto& r : rows) CHECK(r.error.empty());
  // Updates at rate delta per server against lambda arrivals.
  CHECK(rows[4].msgs_per_job == doctest::Approx(1.4 / 0.7).epsilon(0.05));

  std::ostringstream out;
  write_sweep_csv(out, rows);
  const std::string csv = out.str();
  CHECK(csv.rfind("policy,param,msgs_per_job,mean_wait,mean_queue,ci_halfwidth\n", 0) == 0);
  CHECK(csv.find("\nrandom,,0,") != std::string::npos);

  std::ostringstream again;
  write_sweep_csv(again, cmd_sweep(small_sweep()));
  CHECK(again.str() == csv);
}

TEST_CASE("a failing sweep point does not stop the sweep") {
  auto cfg = small_sweep();
  cfg.policies = {"jsq-d", "random"};
  cfg.sweep_by_family["jsq-d"] = {50};  // more samples than servers
  const auto rows = cmd_sweep(cfg);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].error.empty());
  CHECK(std::isnan(rows[0].mean_wait));
  CHECK(rows[1].error.empty());
}

TEST_CASE("fluid command from the fixed point stays put") {
  FluidRequest req;
  req.kind = FluidKind::async;
  req.lambda = 0.7;
  req.delta = 2.5;
  req.t_end = 3.0;
  req.y0 = "fixed-point";
  const auto res = hyperlb::cmd_fluid(req);
  const auto fp = y_star(0.7, 2.5, res.states.front().jmax());
  for (const auto& y : res.states) CHECK(sup_distance(y.data(), fp.y_star.data()) < 1e-6);
  CHECK(res.overlay.empty());
}

TEST_CASE("fluid command reads its start from a trajectory file") {
  FluidRequest req;
  req.t_end = 1.0;
  req.grid_dt = 0.5;
  const auto first = hyperlb::cmd_fluid(req);
  std::ostringstream csv;
  write_trajectory_csv(csv, first.grid, first.states);
  CHECK(csv.str().rfind("t,i,j,y\n", 0) == 0);

  std::istringstream in(csv.str());
  const FluidState back = read_state_csv(in, first.states.front().jmax());
  CHECK(sup_distance(back.data(), first.states.front().data()) < 1e-12);
}

TEST_CASE("fluid overlay averages simulation runs on the output spacing") {
  FluidRequest req;
  req.t_end = 2.0;
  req.grid_dt = 0.5;
  req.overlay_runs = 2;
  req.overlay_servers = 100;
  const auto res = hyperlb::cmd_fluid(req);
  // The fluid grid also carries the update epochs; the overlay only the spacing.
  REQUIRE(res.overlay.size() == 5);
  for (std::size_t k = 0; k < res.overlay.size(); ++k) CHECK(res.overlay[k].t == doctest::Approx(0.5 * k));
  CHECK(res.overlay.front().at(0, 0) == 1.0);
}

TEST_CASE("fixed-point JSON") {
  const json doc = cmd_fixed_point(0.5, 1.0);
  CHECK(doc.at("q_tilde").get<double>() == doctest::Approx(0.5));
  CHECK(doc.at("m_star").get<int>() == 1);
  CHECK(doc.at("residual").get<double>() < 1e-8);
  double mass = 0.0;
  for (const auto& e : doc.at("y_star")) mass += e.at("y").get<double>();
  CHECK(mass == doctest::Approx(1.0));
  CHECK(cmd_fixed_point(0.5, 1.0).dump() == doc.dump());
}

TEST_CASE("fixed-point sweep rows respect their bounds") {
  const json rows = cmd_fixed_point_sweep(0.7, {0.1, 0.3, 0.85, 2.5});
  REQUIRE(rows.size() == 4);
  double prev = INFINITY;
  for (const auto& r : rows) {
    const double q = r.at("q_tilde").get<double>();
    CHECK(q >= r.at("lower").get<double>() - 1e-12);
    CHECK(q <= r.at("upper").get<double>() + 1e-12);
    CHECK(q < prev);
    prev = q;
  }
}

TEST_CASE("number formatting is stable") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(4.0) == "4");
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("synchronized fixed point") {
  const FluidState y = sync_fixed_point(0.7, 10);
  CHECK(y(0, 0) == doctest::Approx(0.3));
  CHECK(y(1, 1) == doctest::Approx(0.7));
}
