#include "hyperlb/fluid_sync.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fluid_stepper.hpp"

namespace hyperlb {

namespace {

struct SyncField {
  double lambda;

  void operator()(const Triangle& y, int m, const Triangle& anchor, Triangle& dy) const {
    const int jmax = y.jmax();
    std::fill(dy.raw().begin(), dy.raw().end(), 0.0);
    for (int j = 0; j <= jmax; ++j) {
      for (int i = 1; i <= j; ++i) {
        dy(i - 1, j) += y(i, j);
        dy(i, j) -= y(i, j);
      }
    }
    thread_local std::vector<double> share;
    if (!detail::assignment_shares(y, anchor, m, share)) return;
    if (m + 1 > jmax) throw std::runtime_error("minimum estimate reached the truncation level");
    for (int i = 0; i <= m; ++i) {
      const double flow = lambda * share[i];
      dy(i, m) -= flow;
      dy(i + 1, m + 1) += flow;
    }
  }
};

void collapse(Triangle& y) {
  const int jmax = y.jmax();
  std::vector<double> v(jmax + 1, 0.0);
  for (int j = 0; j <= jmax; ++j) {
    for (int i = 0; i <= j; ++i) v[i] += y(i, j);
  }
  std::fill(y.raw().begin(), y.raw().end(), 0.0);
  for (int i = 0; i <= jmax; ++i) y(i, i) = v[i];
}

double time_eps(double t) { return 1e-12 * std::max(1.0, std::abs(t)); }

}  // namespace

Triangle rhs_sync(const Triangle& y, double lambda) {
  Triangle dy(y.jmax());
  SyncField{lambda}(y, detail::min_occupied_column(y), y, dy);
  return dy;
}

Triangle rhs_sync(const FluidState& y, double lambda) { return rhs_sync(y.data(), lambda); }

FluidState apply_sync_update(const FluidState& y) {
  Triangle out = y.data();
  collapse(out);
  return FluidState(std::move(out), FluidState::Normalize::no);
}

SyncFluidRun integrate_sync(const FluidState& y0, double lambda, double delta, double t_end,
                            const SyncOptions& options) {
  ModelParams{1, lambda, delta}.validate();
  if (!(t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
  const double dt = options.dt > 0.0 ? options.dt : std::min(1.0 / delta, 1.0) / 1000.0;

  std::vector<double> epochs;
  if (options.epochs.empty()) {
    for (long k = 1;; ++k) {
      const double e = static_cast<double>(k) / delta;
      if (e > t_end + time_eps(t_end)) break;
      epochs.push_back(e);
    }
  } else {
    for (double e : options.epochs) {
      if (!(e > 0.0)) throw std::invalid_argument("update epochs must be positive");
      if (e <= t_end + time_eps(t_end)) epochs.push_back(e);
    }
    std::sort(epochs.begin(), epochs.end());
  }

  struct Mark {
    double t;
    bool epoch;
  };
  std::vector<Mark> marks;
  for (double e : epochs) marks.push_back({e, true});
  if (options.sample_dt > 0.0) {
    for (long k = 1;; ++k) {
      const double s = static_cast<double>(k) * options.sample_dt;
      if (s > t_end + time_eps(t_end)) break;
      marks.push_back({s, false});
    }
  }
  marks.push_back({t_end, false});
  std::stable_sort(marks.begin(), marks.end(), [](const Mark& a, const Mark& b) { return a.t < b.t; });
  // Merge marks closer than rounding; an epoch keeps its own time stamp.
  std::vector<Mark> merged;
  for (const Mark& mk : marks) {
    if (!merged.empty() && mk.t - merged.back().t <= time_eps(mk.t)) {
      if (mk.epoch && !merged.back().epoch) merged.back() = mk;
      continue;
    }
    merged.push_back(mk);
  }

  SyncFluidRun run;
  run.lambda = lambda;
  run.delta = delta;
  Triangle y = y0.data();
  double busy = 0.0;
  double t = 0.0;
  run.grid.push_back(0.0);
  run.states.push_back(y0);
  run.busy_integral.push_back(0.0);

  SyncField field{lambda};
  detail::PiecewiseRk4<SyncField> stepper(field, y.jmax());
  detail::StepperStats stats;
  for (const Mark& mk : merged) {
    if (mk.t <= 0.0) continue;
    stepper.advance(y, busy, t, mk.t, dt, stats);
    if (mk.epoch) {
      run.pre_jump.emplace_back(y, FluidState::Normalize::no);
      collapse(y);
      run.post_jump.emplace_back(y, FluidState::Normalize::no);
      run.update_epochs.push_back(mk.t);
    }
    run.grid.push_back(mk.t);
    run.states.emplace_back(y, FluidState::Normalize::no);
    run.busy_integral.push_back(busy);
  }
  run.clamped_mass = stats.clamped_mass;
  return run;
}

// ---------------------------------------------------------------------------

namespace {

double poisson_log_pmf(int l, double t) { return l * std::log(t) - t - std::lgamma(l + 1.0); }

// P(G > level), summed from the upper side so it keeps full relative accuracy
// far in the tail.
double poisson_upper_tail(int level, double t) {
  double term = std::exp(poisson_log_pmf(level + 1, t));
  double sum = 0.0;
  for (int l = level + 1; term > 0.0 && term > 1e-18 * sum; ++l) {
    sum += term;
    term *= t / (l + 1);
  }
  return sum;
}

}  // namespace

PoissonMoments poisson_AB(int level, double t) {
  if (level < 0) throw std::invalid_argument("level must be >= 0");
  if (!(t >= 0.0)) throw std::invalid_argument("t must be >= 0");
  PoissonMoments out;
  out.t = t;
  out.level = level;
  out.pmf.resize(level + 1);
  double cdf = 0.0;
  for (int l = 0; l <= level; ++l) {
    if (t == 0.0) {
      out.pmf[l] = l == 0 ? 1.0 : 0.0;
    } else {
      out.pmf[l] = std::exp(poisson_log_pmf(l, t));
    }
    cdf += out.pmf[l];
    out.a += static_cast<double>(level - l) * out.pmf[l];
    out.b += static_cast<double>(l) * out.pmf[l];
  }
  // B = E[G; G <= L] + L P(G > L); the tail is taken directly once it is small.
  const double tail = t == 0.0 ? 0.0 : (cdf < 0.5 ? 1.0 - cdf : poisson_upper_tail(level, t));
  out.b += level * tail;
  return out;
}

double sync_sigma(int level, double lambda, double period) {
  if (level < 1) throw std::invalid_argument("level must be >= 1");
  return (1.0 - (lambda * period + 1.0) / level) * poisson_AB(level, period).b;
}

double SyncAnalysis::sigma(int level) const { return sync_sigma(level, lambda, period); }

SyncAnalysis s_of(double lambda, double period) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0, 1)");
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
  SyncAnalysis out{lambda, period, 0, 0.0};
  const double load = lambda * period;
  for (int level = 2; level < 1'000'000; ++level) {
    const double sigma = sync_sigma(level, lambda, period);
    if (load < sigma) {
      out.s_star = level;
      out.delta_margin = sigma - load;
      return out;
    }
  }
  throw std::runtime_error("queue bound scan did not terminate");
}

// ---------------------------------------------------------------------------

bool LemmaReport::violated(const std::string& name) const {
  return std::any_of(violations.begin(), violations.end(), [&](const LemmaViolation& v) { return v.name == name; });
}

LemmaReport check_lemma_invariants(const SyncFluidRun& run, const LemmaTolerances& tol) {
  if (run.grid.size() != run.states.size() || run.grid.size() != run.busy_integral.size() || run.grid.empty()) {
    throw std::invalid_argument("run grid, states and busy integral must have equal nonzero length");
  }
  LemmaReport report;
  std::vector<DerivedFunctionals> d;
  d.reserve(run.states.size());
  for (const auto& s : run.states) {
    d.push_back(derive(s));
    report.mass_residual = std::max(report.mass_residual, std::abs(s.total() - 1.0));
  }

  auto epoch_in = [&](double lo, double hi) {
    return std::any_of(run.update_epochs.begin(), run.update_epochs.end(),
                       [&](double e) { return e > lo + time_eps(lo) && e <= hi + time_eps(hi); });
  };
  auto w_at = [](const DerivedFunctionals& f, int j) {
    return j < static_cast<int>(f.w.size()) ? f.w[j] : 0.0;
  };

  for (std::size_t k = 1; k < run.grid.size(); ++k) {
    const double ta = run.grid[k - 1], tb = run.grid[k];
    if (epoch_in(ta, tb)) continue;
    const auto& a = d[k - 1];
    const auto& b = d[k];
    if (b.m < a.m) ++report.m_decreases;
    const double span = tb - ta;
    if (a.m == b.m && span > 1e-9) {
      const double down = (w_at(b, a.m) - w_at(a, a.m)) / span + run.lambda;
      const double up = (w_at(b, a.m + 1) - w_at(a, a.m + 1)) / span - run.lambda;
      report.slope_residual = std::max({report.slope_residual, std::abs(down), std::abs(up)});
    }
    const int levels = static_cast<int>(std::max(a.v.size(), b.v.size()));
    for (int level = std::max(a.m, b.m) + 1; level < levels; ++level) {
      const double rise = queue_mass_split(b, level).above - queue_mass_split(a, level).above;
      report.monotone_residual = std::max(report.monotone_residual, rise);
    }
  }

  const double t_end = run.grid.back();
  report.balance_residual =
      std::abs(d.back().q_mass - d.front().q_mass - run.lambda * t_end + run.busy_integral.back());

  if (report.slope_residual > tol.slope) report.violations.push_back({"dw_slope", report.slope_residual});
  if (report.monotone_residual > tol.monotone) {
    report.violations.push_back({"tail_monotone", report.monotone_residual});
  }
  if (report.balance_residual > tol.balance) report.violations.push_back({"balance", report.balance_residual});
  if (report.mass_residual > tol.mass) report.violations.push_back({"mass", report.mass_residual});
  if (report.m_decreases > 0) report.violations.push_back({"m_monotone", static_cast<double>(report.m_decreases)});
  return report;
}

}  // namespace hyperlb
