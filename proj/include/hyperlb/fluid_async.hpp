#pragma once

#include <vector>

#include "hyperlb/model.hpp"

namespace hyperlb {

/// Tolerance on u_k <= lambda when choosing the dispatch level.
inline constexpr double kDispatchLevelTol = 1e-12;

/// Dispatch level of the asynchronous fluid limit.
///
/// u[k] = delta * sum_{i<k} (k - i) v_i is the rate at which updates hand the
/// dispatcher capacity below estimate k. Arrivals fill that capacity first;
/// the remainder zeta = lambda - u[n] goes to servers with estimate n.
struct AsyncDriver {
  std::vector<double> u;  // k = 0..m
  int m = 0;
  int n = 0;  // m if u[m] <= lambda, else the largest k < m with u[k] <= lambda
  double zeta = 0.0;
};

AsyncDriver driver_of(const Triangle& y, double lambda, double delta);
AsyncDriver driver_of(const FluidState& y, double lambda, double delta);

/// Time derivative of the asynchronous (exponential update clock) fluid
/// limit. Throws std::invalid_argument on an all-zero state.
Triangle rhs_async(const Triangle& y, double lambda, double delta);
Triangle rhs_async(const FluidState& y, double lambda, double delta);

struct AsyncOptions {
  double dt = 0.0;         // 0 selects min(1/delta, 1) / 1000
  double sample_dt = 0.0;  // 0 records only t = 0 and t_end
};

struct AsyncRun {
  double lambda = 0.0;
  double delta = 0.0;
  std::vector<double> grid;
  std::vector<FluidState> states;
  std::vector<int> dispatch_level;  // n at each grid point
  std::vector<double> zeta;
  std::vector<int> min_estimate;    // m at each grid point
  std::vector<double> busy_integral;
  double clamped_mass = 0.0;
};

AsyncRun integrate_async(const FluidState& y0, double lambda, double delta, double t_end,
                         const AsyncOptions& options = {});

}  // namespace hyperlb
