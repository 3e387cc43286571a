#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "hyperlb/fixed_point.hpp"
#include "hyperlb/fluid_async.hpp"

using namespace hyperlb;

namespace {

// For m* = 1 the equation for nu reduces to a quadratic:
// (1 + nu)(delta + nu) = a^2 delta^2 / (1 - lambda - a^2), a = 1 / (1 + delta).
double nu_quadratic(double lambda, double delta) {
  const double a = 1.0 / (1.0 + delta);
  const double k = a * a * delta * delta / (1.0 - lambda - a * a);
  const double p = 1.0 + delta;
  const double c = delta - k;
  return (-p + std::sqrt(p * p - 4.0 * c)) / 2.0;
}

int m_star_brute(double lambda, double delta) {
  // Smallest m with (1 + delta)^-(m+1) < 1 - lambda.
  int m = 0;
  double tail = 1.0 / (1.0 + delta);
  while (!(tail < 1.0 - lambda)) {
    tail /= 1.0 + delta;
    ++m;
  }
  return m;
}

}  // namespace

TEST_CASE("nu for m* = 1 against the quadratic root") {
  for (auto [lambda, delta] : {std::pair{0.7, 0.85}, std::pair{0.6, 0.7}, std::pair{0.5, 0.5}}) {
    CAPTURE(lambda);
    CAPTURE(delta);
    REQUIRE(m_star(lambda, delta) == 1);
    const double expected = nu_quadratic(lambda, delta);
    CHECK(expected > 0.0);
    CHECK(solve_nu(lambda, delta, 1) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(y_star(lambda, delta).nu == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("nu equation is decreasing with the stated limits") {
  const double delta = 0.85;
  for (int m : {1, 2, 5}) {
    CHECK(nu_equation(0.0, delta, m) == doctest::Approx(std::pow(1 + delta, -m)));
    CHECK(nu_equation(1e9, delta, m) == doctest::Approx(std::pow(1 + delta, -(m + 1))));
    double prev = nu_equation(0.0, delta, m);
    for (double nu = 0.1; nu < 50; nu *= 1.5) {
      const double h = nu_equation(nu, delta, m);
      CHECK(h < prev);
      prev = h;
    }
  }
}

TEST_CASE("m* forms against a brute-force scan") {
  for (int a = 1; a <= 10; ++a) {
    for (int b = 1; b <= 10; ++b) {
      const double lambda = 0.09 * a;
      const double delta = 0.25 * b;
      CAPTURE(lambda);
      CAPTURE(delta);
      CHECK(m_star_min_set(lambda, delta) == m_star_brute(lambda, delta));
      const int closed = m_star_closed_form(lambda, delta);
      const double ratio = -std::log1p(-lambda) / std::log1p(delta);
      // Off the boundary lambda = 1 - (1 + delta)^-m the two forms coincide.
      if (std::abs(ratio - std::round(ratio)) > 1e-9) {
        CHECK(closed == m_star(lambda, delta));
      } else {
        CHECK(std::abs(closed - m_star(lambda, delta)) <= 1);
      }
    }
  }
  // On the boundary lambda = 1 - (1 + delta)^-1 the min-set form takes over.
  CHECK(m_star(0.5, 1.0) == 1);
  CHECK(m_star(0.7, 2.5) == 0);
}

TEST_CASE("fixed point is a probability vector on columns m* and m* + 1") {
  for (auto [lambda, delta] : {std::pair{0.7, 0.85}, std::pair{0.7, 2.5}, std::pair{0.5, 1.0}, std::pair{0.7, 0.3},
                               std::pair{0.9, 0.2}}) {
    CAPTURE(lambda);
    CAPTURE(delta);
    const auto fp = y_star(lambda, delta);
    CHECK(fp.y_star.total() == doctest::Approx(1.0).epsilon(1e-12));
    const auto d = derive(fp.y_star);
    for (std::size_t j = 0; j < d.w.size(); ++j) {
      if (static_cast<int>(j) != fp.m_star && static_cast<int>(j) != fp.m_star + 1) CHECK(d.w[j] == 0.0);
    }
    CHECK(fp.residual < 1e-8);
    // Independent residual: the vector field evaluated here.
    const Triangle dy = rhs_async(fp.y_star, lambda, delta);
    for (double v : dy.raw()) CHECK(std::abs(v) < 1e-8);
    // Mean queue from the occupancy moments.
    double moment = 0.0;
    for (int j = 0; j <= fp.y_star.jmax(); ++j) {
      for (int i = 1; i <= j; ++i) moment += i * fp.y_star(i, j);
    }
    CHECK(fp.q_tilde == doctest::Approx(moment).epsilon(1e-9));
    // Busy fraction equals the arrival rate.
    CHECK(1.0 - d.v[0] == doctest::Approx(lambda).epsilon(1e-9));
  }
}

TEST_CASE("q-tilde bounds and monotonicity in delta") {
  const double lambda = 0.7;
  double prev = INFINITY;
  for (double delta = 0.05; delta <= 5.0; delta *= 1.2) {
    CAPTURE(delta);
    const auto fp = y_star(lambda, delta);
    CHECK(fp.q_tilde >= fp.m_star - lambda / delta - 1e-12);
    CHECK(fp.q_tilde <= fp.m_star + 1 - lambda / delta + 1e-12);
    // Strictly decreasing while queues form; constant at lambda once m* = 0.
    if (fp.m_star > 0) {
      CHECK(fp.q_tilde < prev);
    } else {
      CHECK(fp.q_tilde <= prev + 1e-12);
    }
    prev = fp.q_tilde;
  }
}

TEST_CASE("boundary case lambda = 1/2, delta = 1") {
  // lambda = 1 - (1 + delta)^-1, so nu = 0 and every busy server holds one job.
  const auto fp = y_star(0.5, 1.0);
  CHECK(fp.nu == 0.0);
  CHECK(fp.q_tilde == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("above the threshold servers never queue") {
  const auto fp = y_star(0.7, 2.5);
  CHECK(fp.m_star == 0);
  CHECK(fp.q_tilde == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(derive(fp.y_star).v[2] < 1e-12);
}

TEST_CASE("periodic-update level stays below m*") {
  for (double delta : {0.05, 0.3, 0.85, 2.5}) {
    CHECK(m_star_det(0.7, delta) <= m_star(0.7, delta));
  }
}

TEST_CASE("argument checks") {
  CHECK_THROWS_AS(y_star(1.2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(y_star(0.7, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(y_star(0.7, 0.05, 10), std::invalid_argument);
}
