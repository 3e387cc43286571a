#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hyperlb {

using Rng = std::mt19937_64;

enum class PolicyKind {
  sujsq_det,
  sujsq_exp,
  aujsq_det,
  aujsq_exp,
  sujsq_det_idle,
  jiq,
  jiq_p,
  jsq_d,
  random,
  round_robin,
};

/// Dispatching scheme plus its single parameter, if it has one.
///
/// Text form: "<family>[:<param>]", e.g. "sujsq-det:0.85", "jsq-d:2",
/// "jiq-p:0.3", "jiq", "random", "round-robin".
struct PolicySpec {
  PolicyKind kind = PolicyKind::random;
  double delta = 0.0;  // hyper-scalable kinds
  int d = 0;           // jsq-d
  double p = 0.0;      // jiq-p

  static PolicySpec parse(std::string_view text);
  /// Family with the parameter filled in from `value`; for families without a
  /// parameter `value` is ignored.
  static PolicySpec with_parameter(PolicyKind kind, double value);

  void validate() const;

  bool hyper_scalable() const;
  bool synchronized_updates() const;  // one global update clock
  bool per_server_updates() const;
  bool uses_tokens() const;
  bool has_parameter() const;
  std::optional<double> parameter() const;

  std::string family() const;
  std::string to_string() const;
};

PolicyKind parse_family(std::string_view family);
bool family_has_parameter(PolicyKind kind);

struct Dispatch {
  int server = 0;
  int messages = 0;
};

/// Dispatcher-side state for every scheme: per-server estimates (kept in
/// buckets by estimate so the minimum set is O(1) to sample), the JIQ token
/// pool and the round-robin counter.
class Dispatcher {
 public:
  /// Estimates start equal to `initial_queues`. JIQ starts with a token for
  /// every idle server, JIQ(p) with each such token present with probability p.
  Dispatcher(PolicySpec spec, std::span<const int> initial_queues, Rng& token_rng);

  const PolicySpec& spec() const { return spec_; }
  int n_servers() const { return static_cast<int>(pos_.size()); }

  Dispatch dispatch(std::span<const int> true_queues, Rng& rng);
  void on_assign(int server);
  /// Status update at an update epoch of `server`. Returns messages sent.
  int on_update(int server, int true_len);
  /// `server` just completed its last queued job. Returns messages sent.
  int on_idle(int server, Rng& token_rng);

  const std::vector<int>& estimates() const { return estimates_; }
  int min_estimate() const { return min_level_; }
  std::size_t min_set_size() const;
  const std::vector<int>& tokens() const { return tokens_; }
  bool has_token(int server) const { return token_pos_[server] >= 0; }
  std::int64_t rr_counter() const { return rr_counter_; }

 private:
  void set_estimate(int server, int value);
  void settle_min();
  int pick_jsq_d(std::span<const int> true_queues, Rng& rng) const;
  void add_token(int server);
  int take_token(Rng& rng);

  PolicySpec spec_;
  std::vector<int> estimates_;
  std::vector<std::vector<int>> buckets_;
  std::vector<int> pos_;
  int min_level_ = 0;
  std::vector<int> tokens_;
  std::vector<int> token_pos_;
  std::int64_t rr_counter_ = 0;
};

/// Update epochs for the hyper-scalable schemes.
///
/// Synchronized kinds produce one global stream: k/delta for the det variants,
/// exponential(delta) gaps for sujsq-exp. Asynchronous kinds produce one
/// stream per server: period 1/delta with an independent uniform phase for
/// aujsq-det, a rate-delta Poisson clock for aujsq-exp.
class UpdateSchedule {
 public:
  UpdateSchedule(const PolicySpec& spec, int n_servers);

  double next_global(Rng& rng);
  double next_for_server(int server, Rng& rng);

 private:
  PolicySpec spec_;
  std::int64_t global_count_ = 0;
  double global_last_ = 0.0;
  std::vector<double> phase_;
  std::vector<std::int64_t> count_;
  std::vector<double> last_;
};

}  // namespace hyperlb
