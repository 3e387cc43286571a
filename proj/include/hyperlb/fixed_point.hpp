#pragma once

#include "hyperlb/model.hpp"

namespace hyperlb {

/// Stationary point of the asynchronous fluid limit with exponential update
/// clocks. Mass sits on estimate columns m* and m* + 1 only.
struct FixedPoint {
  double lambda = 0.0;
  double delta = 0.0;
  int m_star = 0;
  double nu = 0.0;
  double a = 0.0;  // 1 / (1 + delta)
  double b = 0.0;  // 1 / (1 + delta + nu)
  FluidState y_star;
  double q_tilde = 0.0;
  double residual = 0.0;  // max |rhs_async(y_star)|
};

/// floor(-log(1 - lambda) / log(1 + delta)).
int m_star_closed_form(double lambda, double delta);
/// min{m : lambda < 1 - (1 + delta)^-(m+1)}.
int m_star_min_set(double lambda, double delta);
/// The two forms agree except possibly at the boundary
/// lambda = 1 - (1 + delta)^-m, where the min-set form wins.
int m_star(double lambda, double delta);

/// Left side of the equation for nu; strictly decreasing in nu, from
/// (1 + delta)^-m at nu = 0 to (1 + delta)^-(m+1) as nu grows.
double nu_equation(double nu, double delta, int m);

/// Root of nu_equation(nu) = 1 - lambda by bisection on a geometrically grown
/// bracket. Returns 0 when the root sits at the boundary.
double solve_nu(double lambda, double delta, int m);

/// Throws std::runtime_error if the closed form fails to be a stationary
/// point (residual >= 1e-8) or its moments disagree.
FixedPoint y_star(double lambda, double delta, int jmax = 0);

double q_tilde(const FixedPoint& fp);
double q_tilde(double lambda, double delta);

/// Largest m with B(m, 1/delta) <= lambda / delta: the level below which no
/// server stays in stationarity under periodic asynchronous updates.
int m_star_det(double lambda, double delta);

}  // namespace hyperlb
