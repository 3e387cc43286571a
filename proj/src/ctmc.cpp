#include "hyperlb/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "hyperlb/fixed_point.hpp"

namespace hyperlb {

namespace {

using RowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Strongly connected components (iterative Tarjan). Returns the component id
// of every vertex.
std::vector<int> components(const RowMatrix& g, int& count) {
  const int n = static_cast<int>(g.rows());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<char> on_stack(n, 0);
  std::vector<int> stack;
  struct Frame {
    int v;
    RowMatrix::InnerIterator it;
  };
  std::vector<Frame> call;
  int next = 0;
  count = 0;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, RowMatrix::InnerIterator(g, root)});
    index[root] = low[root] = next++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      bool descended = false;
      for (; f.it; ++f.it) {
        const int w = static_cast<int>(f.it.col());
        if (w == f.v || f.it.value() <= 0.0) continue;
        if (index[w] < 0) {
          index[w] = low[w] = next++;
          stack.push_back(w);
          on_stack[w] = 1;
          ++f.it;
          call.push_back({w, RowMatrix::InnerIterator(g, w)});
          descended = true;
          break;
        }
        if (on_stack[w]) low[f.v] = std::min(low[f.v], index[w]);
      }
      if (descended) continue;
      const int v = f.v;
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = count;
        } while (w != v);
        ++count;
      }
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comp;
}

void require_irreducible(const RowMatrix& g) {
  int count = 0;
  const std::vector<int> comp = components(g, count);
  if (count <= 1) return;
  std::vector<char> leaves(count, 0);
  for (int v = 0; v < g.rows(); ++v) {
    for (RowMatrix::InnerIterator it(g, v); it; ++it) {
      if (it.col() != v && it.value() > 0.0 && comp[it.col()] != comp[v]) leaves[comp[v]] = 1;
    }
  }
  std::vector<std::vector<std::size_t>> closed;
  std::map<int, std::size_t> slot;
  for (int v = 0; v < g.rows(); ++v) {
    if (leaves[comp[v]]) continue;
    auto [it, fresh] = slot.try_emplace(comp[v], closed.size());
    if (fresh) closed.emplace_back();
    closed[it->second].push_back(static_cast<std::size_t>(v));
  }
  std::ostringstream msg;
  msg << "chain is reducible: " << count << " communicating classes, " << closed.size() << " closed";
  for (const auto& c : closed) {
    msg << " {";
    for (std::size_t k = 0; k < std::min<std::size_t>(c.size(), 8); ++k) msg << (k ? "," : "") << c[k];
    if (c.size() > 8) msg << ",...";
    msg << "}";
  }
  throw ReducibleChainError(msg.str(), std::move(closed));
}

}  // namespace

int server_type_index(int queue, int estimate) {
  if (queue < 0 || queue > estimate) throw std::invalid_argument("server type needs 0 <= queue <= estimate");
  return static_cast<int>(Triangle::offset(estimate)) + queue;
}

ServerType server_type(int index) {
  int e = 0;
  while (static_cast<int>(Triangle::offset(e + 1)) <= index) ++e;
  return {index - static_cast<int>(Triangle::offset(e)), e};
}

int default_cap(double lambda, double delta) { return m_star(lambda, delta) + 4; }

TruncatedChain build_generator(const ModelParams& params, PolicyKind kind, int cap, const ChainOptions& options) {
  params.validate();
  if (kind != PolicyKind::aujsq_exp && kind != PolicyKind::sujsq_exp) {
    throw std::invalid_argument("Markov oracle exists only for exponential update clocks");
  }
  if (cap < 1) throw std::invalid_argument("cap must be >= 1");

  TruncatedChain chain;
  chain.params = params;
  chain.kind = kind;
  chain.cap = cap;
  chain.reduced = options.reduced;
  const int n = params.n_servers;
  const double arrival_rate = params.lambda * n;

  std::map<std::vector<int>, std::size_t> index;
  auto intern = [&](std::vector<int> s) {
    if (chain.reduced) std::sort(s.begin(), s.end());
    auto [it, fresh] = index.try_emplace(s, chain.states.size());
    if (fresh) {
      if (chain.states.size() >= options.max_states) {
        throw std::length_error("state space exceeds " + std::to_string(options.max_states) + " states");
      }
      chain.states.push_back(std::move(s));
    }
    return it->second;
  };

  intern(std::vector<int>(n, server_type_index(0, 0)));
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t k = 0; k < chain.states.size(); ++k) {
    const std::vector<int> s = chain.states[k];
    std::vector<ServerType> types(n);
    for (int r = 0; r < n; ++r) types[r] = server_type(s[r]);
    std::map<std::size_t, double> out;
    double loss = 0.0;

    int min_est = cap + 1;
    for (const auto& t : types) min_est = std::min(min_est, t.estimate);
    const int tied = static_cast<int>(std::count_if(types.begin(), types.end(),
                                                    [&](const ServerType& t) { return t.estimate == min_est; }));
    if (min_est == cap) {
      loss = arrival_rate;
    } else {
      for (int r = 0; r < n; ++r) {
        if (types[r].estimate != min_est) continue;
        std::vector<int> next = s;
        next[r] = server_type_index(types[r].queue + 1, types[r].estimate + 1);
        out[intern(std::move(next))] += arrival_rate / tied;
      }
    }
    for (int r = 0; r < n; ++r) {
      if (types[r].queue == 0) continue;
      std::vector<int> next = s;
      next[r] = server_type_index(types[r].queue - 1, types[r].estimate);
      out[intern(std::move(next))] += ModelParams::service_rate;
    }
    if (kind == PolicyKind::aujsq_exp) {
      for (int r = 0; r < n; ++r) {
        if (types[r].estimate == types[r].queue) continue;
        std::vector<int> next = s;
        next[r] = server_type_index(types[r].queue, types[r].queue);
        out[intern(std::move(next))] += params.delta;
      }
    } else {
      std::vector<int> next = s;
      for (int r = 0; r < n; ++r) next[r] = server_type_index(types[r].queue, types[r].queue);
      std::vector<int> sorted_next = next;
      if (chain.reduced) std::sort(sorted_next.begin(), sorted_next.end());
      if (sorted_next != s) out[intern(std::move(next))] += params.delta;
    }

    double exit = 0.0;
    for (const auto& [to, rate] : out) {
      if (to == k) continue;
      entries.emplace_back(static_cast<int>(k), static_cast<int>(to), rate);
      exit += rate;
    }
    entries.emplace_back(static_cast<int>(k), static_cast<int>(k), -exit);
    chain.loss_rate.push_back(loss);
  }
  const auto size = static_cast<Eigen::Index>(chain.states.size());
  chain.generator.resize(size, size);
  chain.generator.setFromTriplets(entries.begin(), entries.end());
  return chain;
}

std::vector<double> stationary(const RowMatrix& generator) {
  const Eigen::Index n = generator.rows();
  if (n == 0 || generator.cols() != n) throw std::invalid_argument("generator must be square and nonempty");
  if (n == 1) return {1.0};
  require_irreducible(generator);

  // Pin pi(0) = 1 (the empty system), drop its balance equation and solve
  // the remaining ones for the other states; normalize afterwards. A dense
  // normalization row would destroy the sparsity of the factorization.
  const Eigen::Index m = n - 1;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(generator.nonZeros());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (RowMatrix::InnerIterator it(generator, r); it; ++it) {
      if (it.col() == 0) continue;
      if (r == 0) {
        rhs(it.col() - 1) -= it.value();
      } else {
        entries.emplace_back(static_cast<int>(it.col() - 1), static_cast<int>(r - 1), it.value());
      }
    }
  }
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::VectorXd tail;
  if (m <= 2000) {
    tail = Eigen::MatrixXd(a).partialPivLu().solve(rhs);
  } else if (m <= 10'000) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw std::runtime_error("sparse LU failed on the balance equations");
    tail = lu.solve(rhs);
  } else {
    // Direct factorizations fill in badly beyond this size.
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> solver;
    solver.preconditioner().setDroptol(1e-6);
    solver.preconditioner().setFillfactor(20);
    solver.setTolerance(1e-14);
    solver.setMaxIterations(5000);
    solver.compute(a);
    tail = solver.solve(rhs);
    if (solver.info() != Eigen::Success) throw std::runtime_error("iterative solve of the balance equations failed");
  }
  Eigen::VectorXd x(n);
  x(0) = 1.0;
  x.tail(m) = tail;

  std::vector<double> pi(x.data(), x.data() + n);
  double sum = 0.0;
  for (double& p : pi) {
    if (p < 0.0) {
      if (p < -1e-12) throw std::runtime_error("stationary solve produced a negative probability");
      p = 0.0;
    }
    sum += p;
  }
  for (double& p : pi) p /= sum;

  Eigen::Map<const Eigen::RowVectorXd> row(pi.data(), n);
  const Eigen::RowVectorXd balance = row * generator;
  const double residual = balance.cwiseAbs().maxCoeff();
  if (residual > 1e-10) {
    throw std::runtime_error("stationary residual " + std::to_string(residual) + " exceeds 1e-10");
  }
  return pi;
}

std::vector<double> stationary(const TruncatedChain& chain) { return stationary(chain.generator); }

OracleMetrics oracle_metrics(const TruncatedChain& chain, const std::vector<double>& pi) {
  if (pi.size() != chain.size()) throw std::invalid_argument("distribution does not match the chain");
  const int n = chain.params.n_servers;
  OracleMetrics out;
  out.queue_marginal.assign(chain.cap + 1, 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    for (int type : chain.states[k]) {
      const int q = server_type(type).queue;
      out.mean_queue += pi[k] * q;
      out.queue_marginal[q] += pi[k];
    }
    loss += pi[k] * chain.loss_rate[k];
  }
  out.mean_queue /= n;
  for (double& p : out.queue_marginal) p /= n;
  out.mean_wait = out.mean_queue / chain.params.lambda - 1.0;
  out.loss_fraction = loss / (chain.params.lambda * n);
  return out;
}

CappedChain solve_with_loss_below(const ModelParams& params, PolicyKind kind, double loss_target,
                                  const ChainOptions& options) {
  if (!(loss_target > 0.0)) throw std::invalid_argument("loss target must be positive");
  for (int cap = default_cap(params.lambda, params.delta);; cap += 2) {
    CappedChain out;
    out.chain = build_generator(params, kind, cap, options);
    out.pi = stationary(out.chain);
    out.loss_fraction = oracle_metrics(out.chain, out.pi).loss_fraction;
    if (out.loss_fraction < loss_target) return out;
  }
}

double lumping_error(const TruncatedChain& reduced, const TruncatedChain& labeled) {
  if (!reduced.reduced || labeled.reduced) throw std::invalid_argument("expected a reduced and a labeled chain");
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t k = 0; k < reduced.size(); ++k) index.emplace(reduced.states[k], k);
  auto class_of = [&](std::vector<int> s) {
    std::sort(s.begin(), s.end());
    auto it = index.find(s);
    if (it == index.end()) throw std::logic_error("labeled state has no reduced class");
    return it->second;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < labeled.size(); ++k) {
    const std::size_t c = class_of(labeled.states[k]);
    std::map<std::size_t, double> lumped;
    for (RowMatrix::InnerIterator it(labeled.generator, static_cast<Eigen::Index>(k)); it; ++it) {
      if (static_cast<std::size_t>(it.col()) == k) continue;
      const std::size_t target = class_of(labeled.states[it.col()]);
      if (target != c) lumped[target] += it.value();
    }
    for (RowMatrix::InnerIterator it(reduced.generator, static_cast<Eigen::Index>(c)); it; ++it) {
      if (static_cast<std::size_t>(it.col()) == c) continue;
      lumped[it.col()] -= it.value();
    }
    for (const auto& [target, diff] : lumped) worst = std::max(worst, std::abs(diff));
    worst = std::max(worst, std::abs(labeled.loss_rate[k] - reduced.loss_rate[c]));
  }
  return worst;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  const std::size_t n = std::max(p.size(), q.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = k < p.size() ? p[k] : 0.0;
    const double b = k < q.size() ? q[k] : 0.0;
    sum += std::abs(a - b);
  }
  return 0.5 * sum;
}

}  // namespace hyperlb
