#include "hyperlb/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hyperlb/fluid_async.hpp"
#include "hyperlb/fluid_sync.hpp"

namespace hyperlb {

namespace {

void check_range(double lambda, double delta) { ModelParams{1, lambda, delta}.validate(); }

double clamp_rounding(double value) {
  if (value < 0.0) {
    if (value < -1e-12) throw std::runtime_error("fixed point has a negative entry");
    return 0.0;
  }
  return value;
}

}  // namespace

int m_star_closed_form(double lambda, double delta) {
  check_range(lambda, delta);
  return static_cast<int>(std::floor(-std::log1p(-lambda) / std::log1p(delta)));
}

int m_star_min_set(double lambda, double delta) {
  check_range(lambda, delta);
  for (int m = 0;; ++m) {
    if (lambda < 1.0 - std::pow(1.0 + delta, -(m + 1.0))) return m;
    if (m > 1'000'000) throw std::runtime_error("m* scan did not terminate");
  }
}

int m_star(double lambda, double delta) {
  const int closed = m_star_closed_form(lambda, delta);
  const int min_set = m_star_min_set(lambda, delta);
  if (std::abs(closed - min_set) > 1) {
    throw std::logic_error("m* forms disagree by more than one level");
  }
  return min_set;
}

double nu_equation(double nu, double delta, int m) {
  const double a = 1.0 / (1.0 + delta);
  const double b = 1.0 / (1.0 + delta + nu);
  return std::pow(a, m + 1) + a * a * std::pow(b, m - 1) * delta * delta / ((1.0 + nu) * (delta + nu));
}

double solve_nu(double lambda, double delta, int m) {
  check_range(lambda, delta);
  const double target = 1.0 - lambda;
  auto f = [&](double nu) { return nu_equation(nu, delta, m) - target; };
  if (f(0.0) <= 0.0) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (f(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw std::runtime_error("nu bracket did not close; is m consistent with lambda, delta?");
  }
  for (int iter = 0; iter < 400 && hi - lo > 1e-12 * std::max(1.0, lo); ++iter) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

FixedPoint y_star(double lambda, double delta, int jmax) {
  check_range(lambda, delta);
  FixedPoint fp;
  fp.lambda = lambda;
  fp.delta = delta;
  fp.m_star = m_star(lambda, delta);
  const int m = fp.m_star;
  fp.nu = solve_nu(lambda, delta, m);
  const double nu = fp.nu;
  const double a = fp.a = 1.0 / (1.0 + delta);
  const double b = fp.b = 1.0 / (1.0 + delta + nu);
  if (jmax <= 0) jmax = default_jmax(lambda, delta);
  if (jmax < m + 2) throw std::invalid_argument("jmax too small for the fixed point");

  Triangle y(jmax);
  const double corner = a * std::pow(b, m - 1) * delta / ((1.0 + nu) * (delta + nu));
  y(0, m) = corner;
  for (int i = 1; i <= m; ++i) y(i, m) = a * std::pow(b, m - i) * delta / (1.0 + nu);
  y(0, m + 1) = clamp_rounding(std::pow(a, m + 1) - a * corner);
  y(1, m + 1) = delta * y(0, m + 1);
  for (int i = 2; i <= m + 1; ++i) {
    y(i, m + 1) = clamp_rounding(delta * (std::pow(a, m + 2 - i) - a * std::pow(b, m + 1 - i) / (1.0 + nu)));
  }
  fp.y_star = FluidState(y, FluidState::Normalize::no);

  const Triangle dy = rhs_async(y, lambda, delta);
  for (double value : dy.raw()) fp.residual = std::max(fp.residual, std::abs(value));
  if (!(fp.residual < 1e-8)) {
    throw std::runtime_error("fixed point residual " + std::to_string(fp.residual) + " exceeds 1e-8");
  }
  fp.q_tilde = q_tilde(fp);
  const double moment = derive(fp.y_star).q_mass;
  if (std::abs(moment - fp.q_tilde) > 1e-9) {
    throw std::runtime_error("fixed point mean queue disagrees with its moment sum");
  }
  return fp;
}

double q_tilde(const FixedPoint& fp) {
  const double delta = fp.delta;
  const double nu = fp.nu;
  return fp.m_star + 1.0 - fp.lambda / delta -
         (1.0 + delta + nu) * delta / ((1.0 + delta) * (1.0 + nu) * (delta + nu));
}

double q_tilde(double lambda, double delta) { return y_star(lambda, delta).q_tilde; }

int m_star_det(double lambda, double delta) {
  check_range(lambda, delta);
  const double period = 1.0 / delta;
  const double budget = lambda / delta;
  int best = 0;
  for (int m = 1; m < 10'000'000; ++m) {
    if (poisson_AB(m, period).b > budget) break;
    best = m;
  }
  if (best > m_star(lambda, delta)) throw std::logic_error("periodic-update level exceeds the exponential m*");
  return best;
}

}  // namespace hyperlb
