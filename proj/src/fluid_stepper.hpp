#pragma once

// Fixed-step RK4 for the piecewise-smooth fluid vector fields. The regime
// (minimum estimate m) is frozen for the duration of a step; when the column
// of estimate m would empty inside a step, the step is cut at the crossing and
// the residual (|w_m| below kSwitchTol) is handed to column m + 1, which is
// where the assignment flow sends it anyway.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyperlb/model.hpp"

namespace hyperlb::detail {

inline constexpr double kSwitchTol = 1e-12;
inline constexpr double kBoundaryMass = 1e-6;
inline constexpr double kNegligibleColumn = 1e-9;

inline int min_occupied_column(const Triangle& y) {
  for (int j = 0; j <= y.jmax(); ++j) {
    if (y.column_total(j) > 0.0) return j;
  }
  throw std::invalid_argument("fluid state has no mass");
}

inline double idle_fraction(const Triangle& y) {
  double v0 = 0.0;
  for (int j = 0; j <= y.jmax(); ++j) v0 += y(0, j);
  return v0;
}

struct StepperStats {
  double clamped_mass = 0.0;  // total |negative| mass zeroed after steps
  long switches = 0;
};

/// Column proportions y_{i,j} / w_j for assignment into column j. Near a
/// switch a stage state can carry a column of (numerically) zero mass; the
/// proportions of the step's starting state `anchor` are used instead.
inline bool assignment_shares(const Triangle& y, const Triangle& anchor, int j, std::vector<double>& share) {
  share.assign(j + 1, 0.0);
  const double w = y.column_total(j);
  const Triangle& source = w > kNegligibleColumn ? y : anchor;
  const double total = w > kNegligibleColumn ? w : anchor.column_total(j);
  if (!(total > 0.0)) return false;
  for (int i = 0; i <= j; ++i) share[i] = source(i, j) / total;
  return true;
}

/// `Field` must provide
/// `void operator()(const Triangle& y, int m, const Triangle& anchor, Triangle& dy) const`,
/// where m is the minimum occupied column of `anchor`, the state at the start
/// of the step.
template <class Field>
class PiecewiseRk4 {
 public:
  PiecewiseRk4(const Field& field, int jmax) : field_(field), k1_(jmax), k2_(jmax), k3_(jmax), k4_(jmax), tmp_(jmax) {}

  /// Advances (y, busy) from t to `target` in steps of at most `dt`.
  /// `busy` accumulates the integral of 1 - v_0.
  void advance(Triangle& y, double& busy, double& t, double target, double dt, StepperStats& stats) {
    while (t < target) {
      double h = std::min(dt, target - t);
      if (target - (t + h) < 1e-14 * std::max(1.0, std::abs(target))) h = target - t;
      const int m = min_occupied_column(y);
      Triangle trial = y;
      double trial_busy = rk4(trial, m, h);
      const double w_end = trial.column_total(m);
      bool flush = false;
      if (w_end < -kSwitchTol) {
        h = locate_switch(y, m, h, trial, trial_busy);
        flush = true;
      } else if (w_end <= kSwitchTol) {
        flush = true;
      }
      y = std::move(trial);
      busy += trial_busy;
      t = (h == target - t) ? target : t + h;
      if (flush) {
        hand_up(y, m);
        ++stats.switches;
      }
      clamp(y, stats);
      check_boundary(y, t);
    }
  }

 private:
  double rk4(Triangle& y, int m, double h) {
    const std::size_t n = y.size();
    auto& base = y.raw();
    const Triangle& anchor = y;
    field_(y, m, anchor, k1_);
    const double g1 = 1.0 - idle_fraction(y);
    for (std::size_t k = 0; k < n; ++k) tmp_.raw()[k] = base[k] + 0.5 * h * k1_.raw()[k];
    field_(tmp_, m, anchor, k2_);
    const double g2 = 1.0 - idle_fraction(tmp_);
    for (std::size_t k = 0; k < n; ++k) tmp_.raw()[k] = base[k] + 0.5 * h * k2_.raw()[k];
    field_(tmp_, m, anchor, k3_);
    const double g3 = 1.0 - idle_fraction(tmp_);
    for (std::size_t k = 0; k < n; ++k) tmp_.raw()[k] = base[k] + h * k3_.raw()[k];
    field_(tmp_, m, anchor, k4_);
    const double g4 = 1.0 - idle_fraction(tmp_);
    for (std::size_t k = 0; k < n; ++k) {
      base[k] += h / 6.0 * (k1_.raw()[k] + 2.0 * k2_.raw()[k] + 2.0 * k3_.raw()[k] + k4_.raw()[k]);
    }
    return h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
  }

  // Regula falsi (Illinois variant) on the step length for w_m(h) = 0.
  double locate_switch(const Triangle& y, int m, double h_hi, Triangle& out, double& out_busy) {
    double lo = 0.0, f_lo = y.column_total(m);
    double hi = h_hi, f_hi = out.column_total(m);
    int side = 0;
    for (int iter = 0; iter < 200; ++iter) {
      double h = (f_lo * hi - f_hi * lo) / (f_lo - f_hi);
      if (!(h > lo && h < hi)) h = 0.5 * (lo + hi);
      out = y;
      out_busy = rk4(out, m, h);
      const double f = out.column_total(m);
      if (std::abs(f) <= kSwitchTol || hi - lo < 1e-15) return h;
      if (f > 0.0) {
        lo = h;
        f_lo = f;
        if (side == -1) f_hi *= 0.5;
        side = -1;
      } else {
        hi = h;
        f_hi = f;
        if (side == 1) f_lo *= 0.5;
        side = 1;
      }
    }
    return hi;
  }

  static void hand_up(Triangle& y, int m) {
    if (m + 1 > y.jmax()) throw std::runtime_error("minimum estimate reached the truncation level");
    for (int i = 0; i <= m; ++i) {
      y(i + 1, m + 1) += y(i, m);
      y(i, m) = 0.0;
    }
  }

  static void clamp(Triangle& y, StepperStats& stats) {
    for (double& value : y.raw()) {
      if (value < 0.0) {
        if (value < -1e-8) throw std::runtime_error("fluid integration produced a negative entry");
        stats.clamped_mass += -value;
        value = 0.0;
      }
    }
  }

  static void check_boundary(const Triangle& y, double t) {
    const int top = y.jmax();
    if (y.column_total(top) > kBoundaryMass) {
      throw std::runtime_error("fluid mass reached the truncation level jmax=" + std::to_string(top) +
                               " at t=" + std::to_string(t) + "; increase jmax");
    }
  }

  const Field& field_;
  Triangle k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace hyperlb::detail
