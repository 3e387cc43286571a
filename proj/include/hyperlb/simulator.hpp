#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "hyperlb/model.hpp"
#include "hyperlb/policy.hpp"

namespace hyperlb {

struct SimConfig {
  ModelParams params;
  PolicySpec policy;
  double horizon = 5000.0;
  std::optional<double> warmup;  // defaults to 20% of the horizon
  std::uint64_t seed = 1;
  std::optional<double> trajectory_grid;
  // Report update messages as if the dispatcher polled the servers
  // (request + reply), doubling the pull-based count.
  bool push_based_messages = false;
  // Check the model invariants after every event; throws std::logic_error.
  bool audit = false;

  double effective_warmup() const { return warmup.value_or(0.2 * horizon); }
  void validate() const;
};

/// Fluid-scaled occupancy y^N_{i,j}(t) = Y_{i,j}(t) / N at one time point.
struct Snapshot {
  double t = 0.0;
  std::map<std::pair<int, int>, double> y;

  double at(int i, int j) const;
  double v(int i) const;  // fraction with queue length i
  double w(int j) const;  // fraction with estimate j
};

struct MetricsRecord {
  double mean_wait = 0.0;  // service start minus arrival, post-warmup jobs
  double msgs_per_job = 0.0;
  double mean_queue_per_server = 0.0;  // time average, jobs incl. the one in service
  double positive_wait_fraction = 0.0;  // arrivals that joined a busy server
  std::int64_t arrivals = 0;            // post-warmup
  std::int64_t started = 0;             // post-warmup jobs whose service started
  std::int64_t messages = 0;
  std::vector<double> queue_len_hist;   // time-averaged fraction of servers per length
  std::vector<Snapshot> trajectory;
};

struct ReplicationResult {
  MetricsRecord mean;  // per-run averages; trajectory averaged pointwise
  std::vector<MetricsRecord> runs;
  double wait_ci_halfwidth = 0.0;  // normal approximation, 95%
  double queue_ci_halfwidth = 0.0;
  double msgs_ci_halfwidth = 0.0;
};

/// Labelled sub-stream of a master seed.
Rng make_stream(std::uint64_t seed, std::string_view label);
/// Seed of replication `run`; replication 0 uses the master seed itself.
std::uint64_t replication_seed(std::uint64_t seed, int run);

/// Single replication of the N-server system as an event-driven state machine.
class Simulation {
 public:
  explicit Simulation(const SimConfig& config);

  /// Processes the next event if it falls within the horizon.
  bool step();
  void run_to_horizon();
  MetricsRecord finish();

  double now() const { return now_; }
  std::span<const int> queues() const { return queue_; }
  const Dispatcher& dispatcher() const { return dispatcher_; }
  CountMatrix counts() const;
  Snapshot sample(double t) const;

 private:
  enum class EventKind { departure, global_update, server_update, arrival };

  struct Event {
    double time;
    int rank;  // departure < update < arrival at equal times
    std::uint64_t seq;
    EventKind kind;
    int server;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.rank != b.rank) return a.rank > b.rank;
      return a.seq > b.seq;
    }
  };

  void push(double time, EventKind kind, int server = -1);
  void advance_clock(double t);
  void record_samples_before(double t);
  void on_arrival();
  void on_departure(int server);
  void on_global_update();
  void on_server_update(int server);
  void start_service(int server);
  void set_queue(int server, int len);
  void audit(EventKind kind) const;

  SimConfig config_;
  double warmup_;
  int n_;
  Rng arrival_rng_, service_rng_, policy_rng_, update_rng_, token_rng_;
  std::vector<int> queue_;
  std::vector<std::deque<double>> fifo_;
  Dispatcher dispatcher_;
  std::optional<UpdateSchedule> updates_;
  std::priority_queue<Event, std::vector<Event>, Later> calendar_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  bool done_ = false;

  std::vector<std::int64_t> servers_by_len_;
  std::int64_t jobs_in_system_ = 0;
  std::vector<double> len_time_;
  double job_time_ = 0.0;
  std::int64_t arrivals_ = 0, started_ = 0, positive_wait_ = 0, messages_ = 0;
  double wait_sum_ = 0.0;
  std::vector<std::int64_t> assigned_;  // per server, for the round-robin audit

  std::size_t next_sample_ = 0;
  std::vector<Snapshot> trajectory_;
};

MetricsRecord run(const SimConfig& config);
/// Independent replications (possibly concurrent); results are assembled in
/// run order so the aggregate is deterministic.
ReplicationResult run_replications(const SimConfig& config, int runs);
Snapshot sample_trajectory(const Simulation& sim, double t);

}  // namespace hyperlb
