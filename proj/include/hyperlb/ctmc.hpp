#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "hyperlb/model.hpp"
#include "hyperlb/policy.hpp"

namespace hyperlb {

/// Finite-N Markov model of a hyper-scalable scheme with exponential update
/// clocks. Each server is a pair (queue q, estimate e) with q <= e <= cap;
/// arrivals that would push an estimate past cap are rejected and counted.
struct TruncatedChain {
  ModelParams params;
  PolicyKind kind = PolicyKind::aujsq_exp;
  int cap = 0;
  bool reduced = true;  // states are sorted server tuples (exchangeability)
  // Per state, the (q, e) type index of every server; see server_type().
  std::vector<std::vector<int>> states;
  Eigen::SparseMatrix<double, Eigen::RowMajor> generator;
  std::vector<double> loss_rate;  // rejected-arrival rate out of each state

  std::size_t size() const { return states.size(); }
};

struct ServerType {
  int queue = 0;
  int estimate = 0;
};

int server_type_index(int queue, int estimate);
ServerType server_type(int index);

struct ChainOptions {
  bool reduced = true;
  std::size_t max_states = 250'000;
};

/// Breadth-first enumeration from the empty system. Supports aujsq-exp
/// (per-server rate-delta updates) and sujsq-exp (one global rate-delta
/// collapse). Throws std::length_error beyond options.max_states.
TruncatedChain build_generator(const ModelParams& params, PolicyKind kind, int cap, const ChainOptions& options = {});

/// Starting cap: m*(lambda, delta) + 4.
int default_cap(double lambda, double delta);

struct CappedChain {
  TruncatedChain chain;
  std::vector<double> pi;
  double loss_fraction = 0.0;
};

/// Builds and solves chains with cap = default_cap, default_cap + 2, ...
/// until the rejected fraction of arrivals drops below `loss_target`.
CappedChain solve_with_loss_below(const ModelParams& params, PolicyKind kind, double loss_target,
                                  const ChainOptions& options = {});

class ReducibleChainError : public std::runtime_error {
 public:
  ReducibleChainError(const std::string& what, std::vector<std::vector<std::size_t>> closed)
      : std::runtime_error(what), closed_classes(std::move(closed)) {}
  std::vector<std::vector<std::size_t>> closed_classes;
};

/// Solves pi G = 0, sum pi = 1 with pi(0) pinned before normalization. Dense
/// LU up to 2000 states, sparse LU up to 10000, preconditioned BiCGSTAB above.
/// Throws ReducibleChainError unless the chain is one communicating class,
/// std::runtime_error if the residual exceeds 1e-10.
std::vector<double> stationary(const Eigen::SparseMatrix<double, Eigen::RowMajor>& generator);
std::vector<double> stationary(const TruncatedChain& chain);

struct OracleMetrics {
  double mean_queue = 0.0;  // per server, including the job in service
  double mean_wait = 0.0;   // mean_queue / lambda - 1
  double loss_fraction = 0.0;
  std::vector<double> queue_marginal;  // fraction of servers with queue i
};

OracleMetrics oracle_metrics(const TruncatedChain& chain, const std::vector<double>& pi);

/// Largest discrepancy between the reduced generator and the labeled one
/// aggregated over each reduced class (zero for an exact reduction).
double lumping_error(const TruncatedChain& reduced, const TruncatedChain& labeled);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace hyperlb
