#pragma once

#include <string>
#include <vector>

#include "hyperlb/model.hpp"

namespace hyperlb {

/// Fluid limit of the synchronized schemes: smooth flow between update
/// epochs, diagonal collapse at every epoch.
struct SyncOptions {
  double dt = 0.0;         // 0 selects min(1/delta, 1) / 1000
  double sample_dt = 0.0;  // 0 records only t = 0, the epochs and t_end
  // Explicit epochs (e.g. a sampled Poisson clock for sujsq-exp); when empty
  // the epochs are k / delta.
  std::vector<double> epochs;
};

struct SyncFluidRun {
  double lambda = 0.0;
  double delta = 0.0;
  std::vector<double> grid;
  std::vector<FluidState> states;     // right-continuous: post-jump at epochs
  std::vector<double> busy_integral;  // integral of 1 - v_0 over [0, grid[k]]
  std::vector<double> update_epochs;
  std::vector<FluidState> pre_jump;   // y(t^-) at each applied epoch
  std::vector<FluidState> post_jump;  // y(t) at each applied epoch
  double clamped_mass = 0.0;
};

/// Time derivative between epochs. Throws std::invalid_argument on an
/// all-zero state.
Triangle rhs_sync(const Triangle& y, double lambda);
Triangle rhs_sync(const FluidState& y, double lambda);

/// Every server learns its queue length: y'_{i,i} = v_i, off-diagonal zero.
FluidState apply_sync_update(const FluidState& y);

SyncFluidRun integrate_sync(const FluidState& y0, double lambda, double delta, double t_end,
                            const SyncOptions& options = {});

/// Moments of G ~ Poisson(t) truncated at L: A = E[max(L - G, 0)] and
/// B = E[min(G, L)].
struct PoissonMoments {
  double t = 0.0;
  int level = 0;
  std::vector<double> pmf;  // P(G = l) for l = 0..level
  double a = 0.0;
  double b = 0.0;
};

PoissonMoments poisson_AB(int level, double t);

/// Queue-length bound of the synchronized fluid limit with epoch length T.
struct SyncAnalysis {
  double lambda = 0.0;
  double period = 0.0;
  int s_star = 0;             // min{L : lambda T < sigma(L)}
  double delta_margin = 0.0;  // sigma(s_star) - lambda T

  double sigma(int level) const;
};

double sync_sigma(int level, double lambda, double period);
SyncAnalysis s_of(double lambda, double period);

struct LemmaTolerances {
  double slope = 1e-6;
  double monotone = 1e-9;
  double balance = 1e-6;
  double mass = 1e-9;
};

struct LemmaViolation {
  std::string name;  // dw_slope, tail_monotone, balance, mass, m_monotone
  double residual = 0.0;
};

struct LemmaReport {
  double slope_residual = 0.0;    // max |dw_m/dt + lambda|, |dw_{m+1}/dt - lambda|
  double monotone_residual = 0.0; // largest increase of Q^{>K} while m <= K - 1
  double balance_residual = 0.0;  // |Q(t) - Q(0) - lambda t + integral(1 - v_0)|
  double mass_residual = 0.0;
  int m_decreases = 0;            // m dropped between epochs
  std::vector<LemmaViolation> violations;

  bool ok() const { return violations.empty(); }
  bool violated(const std::string& name) const;
};

/// Checks the externally observable properties of a stored run on its grid.
LemmaReport check_lemma_invariants(const SyncFluidRun& run, const LemmaTolerances& tol = {});

}  // namespace hyperlb
