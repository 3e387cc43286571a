#include "hyperlb/fluid_async.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fluid_stepper.hpp"

namespace hyperlb {

namespace {

struct AsyncField {
  double lambda;
  double delta;

  // The dispatch level is recomputed from y on every evaluation, so the
  // frozen minimum column passed by the stepper is not used.
  void operator()(const Triangle& y, int, const Triangle& anchor, Triangle& dy) const {
    const int jmax = y.jmax();
    std::vector<double> v(jmax + 1, 0.0);
    std::fill(dy.raw().begin(), dy.raw().end(), 0.0);
    for (int j = 0; j <= jmax; ++j) {
      for (int i = 0; i <= j; ++i) {
        const double value = y(i, j);
        v[i] += value;
        if (i > 0) {
          dy(i - 1, j) += value;
          dy(i, j) -= value;
        }
        dy(i, j) -= delta * value;
      }
    }
    const AsyncDriver drv = driver_of(y, lambda, delta);
    const int n = drv.n;
    double below = 0.0;
    for (int k = 0; k < n; ++k) below += v[k];
    dy(n, n) += delta * below;
    for (int i = n; i <= jmax; ++i) dy(i, i) += delta * v[i];

    if (drv.zeta <= 0.0) return;
    thread_local std::vector<double> share;
    if (!detail::assignment_shares(y, anchor, n, share)) return;
    if (n + 1 > jmax) throw std::runtime_error("dispatch level reached the truncation level");
    for (int i = 0; i <= n; ++i) {
      const double flow = drv.zeta * share[i];
      dy(i, n) -= flow;
      dy(i + 1, n + 1) += flow;
    }
  }
};

}  // namespace

AsyncDriver driver_of(const Triangle& y, double lambda, double delta) {
  AsyncDriver drv;
  drv.m = detail::min_occupied_column(y);
  std::vector<double> v(drv.m + 1, 0.0);
  for (int j = 0; j <= y.jmax(); ++j) {
    for (int i = 0; i <= std::min(j, drv.m); ++i) v[i] += y(i, j);
  }
  drv.u.assign(drv.m + 1, 0.0);
  double below = 0.0;  // sum_{i<k} v_i
  for (int k = 1; k <= drv.m; ++k) {
    below += v[k - 1];
    drv.u[k] = drv.u[k - 1] + delta * below;
  }
  drv.n = drv.m;
  while (drv.n > 0 && drv.u[drv.n] > lambda + kDispatchLevelTol) --drv.n;
  drv.zeta = std::max(lambda - drv.u[drv.n], 0.0);
  return drv;
}

AsyncDriver driver_of(const FluidState& y, double lambda, double delta) {
  return driver_of(y.data(), lambda, delta);
}

Triangle rhs_async(const Triangle& y, double lambda, double delta) {
  Triangle dy(y.jmax());
  AsyncField{lambda, delta}(y, detail::min_occupied_column(y), y, dy);
  return dy;
}

Triangle rhs_async(const FluidState& y, double lambda, double delta) { return rhs_async(y.data(), lambda, delta); }

AsyncRun integrate_async(const FluidState& y0, double lambda, double delta, double t_end,
                         const AsyncOptions& options) {
  ModelParams{1, lambda, delta}.validate();
  if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
  const double dt = options.dt > 0.0 ? options.dt : std::min(1.0 / delta, 1.0) / 1000.0;

  std::vector<double> marks;
  if (options.sample_dt > 0.0) {
    for (long k = 1;; ++k) {
      const double s = static_cast<double>(k) * options.sample_dt;
      if (s >= t_end - 1e-12 * std::max(1.0, t_end)) break;
      marks.push_back(s);
    }
  }
  if (t_end > 0.0) marks.push_back(t_end);

  AsyncRun run;
  run.lambda = lambda;
  run.delta = delta;
  Triangle y = y0.data();
  double busy = 0.0;
  double t = 0.0;
  auto record = [&](double at) {
    const AsyncDriver drv = driver_of(y, lambda, delta);
    run.grid.push_back(at);
    run.states.emplace_back(y, FluidState::Normalize::no);
    run.dispatch_level.push_back(drv.n);
    run.zeta.push_back(drv.zeta);
    run.min_estimate.push_back(drv.m);
    run.busy_integral.push_back(busy);
  };
  record(0.0);

  AsyncField field{lambda, delta};
  detail::PiecewiseRk4<AsyncField> stepper(field, y.jmax());
  detail::StepperStats stats;
  for (double mark : marks) {
    stepper.advance(y, busy, t, mark, dt, stats);
    record(mark);
  }
  run.clamped_mass = stats.clamped_mass;
  return run;
}

}  // namespace hyperlb
