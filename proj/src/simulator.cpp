#include "hyperlb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace hyperlb {

namespace {

constexpr int kRankDeparture = 0;
constexpr int kRankUpdate = 1;
constexpr int kRankArrival = 2;
constexpr double kSampleSnap = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double ci_halfwidth(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (xs.size() - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace

void SimConfig::validate() const {
  params.validate();
  policy.validate();
  const double w = effective_warmup();
  if (!(horizon > 0.0) || !(w >= 0.0) || !(w < horizon)) {
    throw std::invalid_argument("need 0 <= warmup < horizon");
  }
  if (trajectory_grid && !(*trajectory_grid > 0.0)) throw std::invalid_argument("trajectory grid must be positive");
}

double Snapshot::at(int i, int j) const {
  auto it = y.find({i, j});
  return it == y.end() ? 0.0 : it->second;
}

double Snapshot::v(int i) const {
  double sum = 0.0;
  for (const auto& [key, value] : y) {
    if (key.first == i) sum += value;
  }
  return sum;
}

double Snapshot::w(int j) const {
  double sum = 0.0;
  for (const auto& [key, value] : y) {
    if (key.second == j) sum += value;
  }
  return sum;
}

Rng make_stream(std::uint64_t seed, std::string_view label) {
  const std::uint64_t h = fnv1a(label);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

std::uint64_t replication_seed(std::uint64_t seed, int run) {
  if (run == 0) return seed;
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(run)));
}

// ---------------------------------------------------------------------------

namespace {

Dispatcher make_dispatcher(const SimConfig& config, Rng& token_rng) {
  std::vector<int> empty(config.params.n_servers, 0);
  return Dispatcher(config.policy, empty, token_rng);
}

}  // namespace

Simulation::Simulation(const SimConfig& config)
    : config_(config),
      warmup_((config.validate(), config.effective_warmup())),
      n_(config.params.n_servers),
      arrival_rng_(make_stream(config.seed, "arrivals")),
      service_rng_(make_stream(config.seed, "services")),
      policy_rng_(make_stream(config.seed, "policy")),
      update_rng_(make_stream(config.seed, "updates")),
      token_rng_(make_stream(config.seed, "tokens")),
      queue_(n_, 0),
      fifo_(n_),
      dispatcher_(make_dispatcher(config, token_rng_)),
      servers_by_len_(1, n_),
      len_time_(1, 0.0),
      assigned_(n_, 0) {
  if (config_.policy.hyper_scalable()) {
    updates_.emplace(config_.policy, n_);
    if (config_.policy.synchronized_updates()) {
      push(updates_->next_global(update_rng_), EventKind::global_update);
    } else {
      for (int s = 0; s < n_; ++s) push(updates_->next_for_server(s, update_rng_), EventKind::server_update, s);
    }
  }
  const double rate = config_.params.lambda * n_;
  push(std::exponential_distribution<double>(rate)(arrival_rng_), EventKind::arrival);
}

void Simulation::push(double time, EventKind kind, int server) {
  int rank = kRankArrival;
  if (kind == EventKind::departure) rank = kRankDeparture;
  if (kind == EventKind::global_update || kind == EventKind::server_update) rank = kRankUpdate;
  calendar_.push(Event{time, rank, seq_++, kind, server});
}

void Simulation::advance_clock(double t) {
  const double lo = std::max(now_, warmup_);
  const double hi = std::min(t, config_.horizon);
  if (hi > lo) {
    const double dt = hi - lo;
    for (std::size_t i = 0; i < servers_by_len_.size(); ++i) len_time_[i] += dt * servers_by_len_[i];
    job_time_ += dt * jobs_in_system_;
  }
  now_ = t;
}

void Simulation::record_samples_before(double t) {
  if (!config_.trajectory_grid) return;
  const double grid = *config_.trajectory_grid;
  for (;;) {
    const double g = static_cast<double>(next_sample_) * grid;
    // Events within rounding of a grid point (k / delta against k * grid)
    // belong to that point, so samples are right-continuous.
    if (!(g < t - kSampleSnap * std::max(1.0, g)) || g > config_.horizon) break;
    trajectory_.push_back(sample(g));
    ++next_sample_;
  }
}

bool Simulation::step() {
  if (done_) return false;
  if (calendar_.empty() || calendar_.top().time > config_.horizon) {
    record_samples_before(config_.horizon + 1.0);
    advance_clock(config_.horizon);
    done_ = true;
    return false;
  }
  const Event ev = calendar_.top();
  calendar_.pop();
  record_samples_before(ev.time);
  advance_clock(ev.time);
  switch (ev.kind) {
    case EventKind::arrival:
      on_arrival();
      break;
    case EventKind::departure:
      on_departure(ev.server);
      break;
    case EventKind::global_update:
      on_global_update();
      break;
    case EventKind::server_update:
      on_server_update(ev.server);
      break;
  }
  if (config_.audit) audit(ev.kind);
  return true;
}

void Simulation::run_to_horizon() {
  while (step()) {
  }
}

void Simulation::set_queue(int server, int len) {
  const int old = queue_[server];
  --servers_by_len_[old];
  if (static_cast<std::size_t>(len) >= servers_by_len_.size()) {
    servers_by_len_.resize(len + 1, 0);
    len_time_.resize(len + 1, 0.0);
  }
  ++servers_by_len_[len];
  jobs_in_system_ += len - old;
  queue_[server] = len;
}

void Simulation::start_service(int server) {
  const double arrived = fifo_[server].front();
  if (arrived >= warmup_) {
    wait_sum_ += now_ - arrived;
    ++started_;
  }
  push(now_ + std::exponential_distribution<double>(1.0)(service_rng_), EventKind::departure, server);
}

void Simulation::on_arrival() {
  if (config_.audit && config_.policy.hyper_scalable() && dispatcher_.min_set_size() == 0) {
    throw std::logic_error("arrival found an empty minimum-estimate set");
  }
  const Dispatch d = dispatcher_.dispatch(queue_, policy_rng_);
  const bool counted = now_ >= warmup_;
  if (counted) {
    ++arrivals_;
    messages_ += d.messages;
    if (queue_[d.server] > 0) ++positive_wait_;
  }
  dispatcher_.on_assign(d.server);
  ++assigned_[d.server];
  fifo_[d.server].push_back(now_);
  set_queue(d.server, queue_[d.server] + 1);
  if (queue_[d.server] == 1) start_service(d.server);
  push(now_ + std::exponential_distribution<double>(config_.params.lambda * n_)(arrival_rng_), EventKind::arrival);
}

void Simulation::on_departure(int server) {
  const double arrived = fifo_[server].front();
  fifo_[server].pop_front();
  set_queue(server, queue_[server] - 1);
  if (queue_[server] > 0) {
    start_service(server);
    return;
  }
  // Token messages are charged to the job whose departure triggered them.
  const int msgs = dispatcher_.on_idle(server, token_rng_);
  if (arrived >= warmup_) messages_ += msgs;
}

void Simulation::on_global_update() {
  std::int64_t msgs = 0;
  for (int s = 0; s < n_; ++s) msgs += dispatcher_.on_update(s, queue_[s]);
  if (now_ >= warmup_) messages_ += config_.push_based_messages ? 2 * msgs : msgs;
  push(updates_->next_global(update_rng_), EventKind::global_update);
}

void Simulation::on_server_update(int server) {
  const int msgs = dispatcher_.on_update(server, queue_[server]);
  if (now_ >= warmup_) messages_ += config_.push_based_messages ? 2 * msgs : msgs;
  push(updates_->next_for_server(server, update_rng_), EventKind::server_update, server);
}

void Simulation::audit(EventKind kind) const {
  std::int64_t total = 0;
  for (int s = 0; s < n_; ++s) {
    if (queue_[s] < 0) throw std::logic_error("negative queue length");
    if (static_cast<std::size_t>(queue_[s]) != fifo_[s].size()) throw std::logic_error("queue/fifo mismatch");
    total += queue_[s];
    if (config_.policy.hyper_scalable() && dispatcher_.estimates()[s] < queue_[s]) {
      throw std::logic_error("estimate below true queue length at server " + std::to_string(s));
    }
    if (kind == EventKind::global_update) {
      const int e = dispatcher_.estimates()[s];
      if (config_.policy.kind == PolicyKind::sujsq_det_idle) {
        if (queue_[s] == 0 && e != 0) throw std::logic_error("idle server not reset at update epoch");
      } else if (e != queue_[s]) {
        throw std::logic_error("estimate differs from queue right after a synchronous update");
      }
    }
  }
  if (total != jobs_in_system_) throw std::logic_error("job count mismatch");
  if (std::accumulate(servers_by_len_.begin(), servers_by_len_.end(), std::int64_t{0}) != n_) {
    throw std::logic_error("length histogram does not sum to N");
  }
  if (config_.policy.kind == PolicyKind::round_robin) {
    auto [lo, hi] = std::minmax_element(assigned_.begin(), assigned_.end());
    if (*hi - *lo > 1) throw std::logic_error("round-robin assignment counts differ by more than one");
  }
}

CountMatrix Simulation::counts() const {
  std::map<std::pair<int, int>, std::int64_t> c;
  const bool has_estimates = config_.policy.hyper_scalable();
  for (int s = 0; s < n_; ++s) {
    const int e = has_estimates ? dispatcher_.estimates()[s] : queue_[s];
    ++c[{queue_[s], e}];
  }
  return CountMatrix(n_, std::move(c));
}

Snapshot Simulation::sample(double t) const {
  Snapshot snap;
  snap.t = t;
  const double scale = 1.0 / n_;
  const CountMatrix current = counts();
  for (const auto& [key, count] : current.counts()) snap.y[key] = count * scale;
  return snap;
}

MetricsRecord Simulation::finish() {
  run_to_horizon();
  if (arrivals_ == 0) throw std::runtime_error("no arrivals after warmup; horizon too short");
  MetricsRecord out;
  const double span = config_.horizon - warmup_;
  out.arrivals = arrivals_;
  out.started = started_;
  out.messages = messages_;
  out.mean_wait = started_ > 0 ? wait_sum_ / started_ : 0.0;
  out.msgs_per_job = static_cast<double>(messages_) / arrivals_;
  out.positive_wait_fraction = static_cast<double>(positive_wait_) / arrivals_;
  out.mean_queue_per_server = job_time_ / (span * n_);
  out.queue_len_hist.resize(len_time_.size());
  double norm = std::accumulate(len_time_.begin(), len_time_.end(), 0.0);
  for (std::size_t i = 0; i < len_time_.size(); ++i) out.queue_len_hist[i] = len_time_[i] / norm;
  out.trajectory = trajectory_;
  return out;
}

Snapshot sample_trajectory(const Simulation& sim, double t) { return sim.sample(t); }

MetricsRecord run(const SimConfig& config) {
  Simulation sim(config);
  return sim.finish();
}

ReplicationResult run_replications(const SimConfig& config, int runs) {
  if (runs < 1) throw std::invalid_argument("need at least one replication");
  config.validate();
  ReplicationResult result;
  result.runs.resize(runs);

  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), runs));
  for (int base = 0; base < runs; base += static_cast<int>(workers)) {
    std::vector<std::future<MetricsRecord>> batch;
    const int end = std::min(runs, base + static_cast<int>(workers));
    for (int r = base; r < end; ++r) {
      SimConfig c = config;
      c.seed = replication_seed(config.seed, r);
      batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, [c] { return run(c); }));
    }
    for (int r = base; r < end; ++r) result.runs[r] = batch[r - base].get();
  }

  MetricsRecord& mean = result.mean;
  std::vector<double> waits, queues, msgs;
  std::size_t hist_len = 0;
  for (const auto& r : result.runs) {
    waits.push_back(r.mean_wait);
    queues.push_back(r.mean_queue_per_server);
    msgs.push_back(r.msgs_per_job);
    mean.positive_wait_fraction += r.positive_wait_fraction / runs;
    mean.arrivals += r.arrivals;
    mean.started += r.started;
    mean.messages += r.messages;
    hist_len = std::max(hist_len, r.queue_len_hist.size());
  }
  mean.mean_wait = std::accumulate(waits.begin(), waits.end(), 0.0) / runs;
  mean.mean_queue_per_server = std::accumulate(queues.begin(), queues.end(), 0.0) / runs;
  mean.msgs_per_job = std::accumulate(msgs.begin(), msgs.end(), 0.0) / runs;
  mean.queue_len_hist.assign(hist_len, 0.0);
  for (const auto& r : result.runs) {
    for (std::size_t i = 0; i < r.queue_len_hist.size(); ++i) mean.queue_len_hist[i] += r.queue_len_hist[i] / runs;
  }

  const auto& first = result.runs.front().trajectory;
  mean.trajectory.resize(first.size());
  for (std::size_t k = 0; k < first.size(); ++k) {
    mean.trajectory[k].t = first[k].t;
    for (const auto& r : result.runs) {
      for (const auto& [key, value] : r.trajectory[k].y) mean.trajectory[k].y[key] += value / runs;
    }
  }

  result.wait_ci_halfwidth = ci_halfwidth(waits);
  result.queue_ci_halfwidth = ci_halfwidth(queues);
  result.msgs_ci_halfwidth = ci_halfwidth(msgs);
  return result;
}

}  // namespace hyperlb
