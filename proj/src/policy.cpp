#include "hyperlb/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hyperlb {

namespace {

struct FamilyName {
  PolicyKind kind;
  std::string_view name;
};

constexpr FamilyName kFamilies[] = {
    {PolicyKind::sujsq_det, "sujsq-det"},
    {PolicyKind::sujsq_exp, "sujsq-exp"},
    {PolicyKind::aujsq_det, "aujsq-det"},
    {PolicyKind::aujsq_exp, "aujsq-exp"},
    {PolicyKind::sujsq_det_idle, "sujsq-det-idle"},
    {PolicyKind::jiq, "jiq"},
    {PolicyKind::jiq_p, "jiq-p"},
    {PolicyKind::jsq_d, "jsq-d"},
    {PolicyKind::random, "random"},
    {PolicyKind::round_robin, "round-robin"},
};

double parse_number(std::string_view text, std::string_view context) {
  std::string buf(text);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(buf, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != buf.size()) {
    throw std::invalid_argument("bad parameter '" + buf + "' in policy '" + std::string(context) + "'");
  }
  return value;
}

std::string format_param(double value) {
  std::ostringstream out;
  out.precision(10);
  out << value;
  return out.str();
}

}  // namespace

PolicyKind parse_family(std::string_view family) {
  for (const auto& f : kFamilies) {
    if (f.name == family) return f.kind;
  }
  throw std::invalid_argument("unknown policy family '" + std::string(family) + "'");
}

bool family_has_parameter(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::jiq:
    case PolicyKind::random:
    case PolicyKind::round_robin:
      return false;
    default:
      return true;
  }
}

PolicySpec PolicySpec::with_parameter(PolicyKind kind, double value) {
  PolicySpec spec;
  spec.kind = kind;
  switch (kind) {
    case PolicyKind::jsq_d:
      if (value != std::floor(value)) throw std::invalid_argument("jsq-d needs an integer sample size");
      spec.d = static_cast<int>(value);
      break;
    case PolicyKind::jiq_p:
      spec.p = value;
      break;
    case PolicyKind::jiq:
    case PolicyKind::random:
    case PolicyKind::round_robin:
      break;
    default:
      spec.delta = value;
      break;
  }
  spec.validate();
  return spec;
}

PolicySpec PolicySpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view family = text.substr(0, colon);
  const PolicyKind kind = parse_family(family);
  const bool has_value = colon != std::string_view::npos;
  if (family_has_parameter(kind) != has_value) {
    throw std::invalid_argument("policy '" + std::string(text) +
                                (has_value ? "' takes no parameter" : "' requires a parameter"));
  }
  const double value = has_value ? parse_number(text.substr(colon + 1), text) : 0.0;
  return with_parameter(kind, value);
}

void PolicySpec::validate() const {
  if (hyper_scalable() && !(delta > 0.0 && std::isfinite(delta))) {
    throw std::invalid_argument("update frequency must be positive");
  }
  if (kind == PolicyKind::jsq_d && d < 1) throw std::invalid_argument("jsq-d sample size must be >= 1");
  if (kind == PolicyKind::jiq_p && !(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("jiq-p probability must lie in [0, 1]");
  }
}

bool PolicySpec::hyper_scalable() const {
  switch (kind) {
    case PolicyKind::sujsq_det:
    case PolicyKind::sujsq_exp:
    case PolicyKind::aujsq_det:
    case PolicyKind::aujsq_exp:
    case PolicyKind::sujsq_det_idle:
      return true;
    default:
      return false;
  }
}

bool PolicySpec::synchronized_updates() const {
  return kind == PolicyKind::sujsq_det || kind == PolicyKind::sujsq_exp || kind == PolicyKind::sujsq_det_idle;
}

bool PolicySpec::per_server_updates() const {
  return kind == PolicyKind::aujsq_det || kind == PolicyKind::aujsq_exp;
}

bool PolicySpec::uses_tokens() const { return kind == PolicyKind::jiq || kind == PolicyKind::jiq_p; }

bool PolicySpec::has_parameter() const { return family_has_parameter(kind); }

std::optional<double> PolicySpec::parameter() const {
  if (kind == PolicyKind::jsq_d) return static_cast<double>(d);
  if (kind == PolicyKind::jiq_p) return p;
  if (hyper_scalable()) return delta;
  return std::nullopt;
}

std::string PolicySpec::family() const {
  for (const auto& f : kFamilies) {
    if (f.kind == kind) return std::string(f.name);
  }
  return "unknown";
}

std::string PolicySpec::to_string() const {
  auto value = parameter();
  return value ? family() + ":" + format_param(*value) : family();
}

// ---------------------------------------------------------------------------

Dispatcher::Dispatcher(PolicySpec spec, std::span<const int> initial_queues, Rng& token_rng)
    : spec_(spec),
      estimates_(initial_queues.begin(), initial_queues.end()),
      pos_(initial_queues.size(), -1),
      token_pos_(initial_queues.size(), -1) {
  spec_.validate();
  if (initial_queues.empty()) throw std::invalid_argument("dispatcher needs at least one server");
  if (spec_.kind == PolicyKind::jsq_d && spec_.d > n_servers()) {
    throw std::invalid_argument("jsq-d sample size exceeds the number of servers");
  }
  for (int s = 0; s < n_servers(); ++s) {
    const int e = estimates_[s];
    if (e < 0) throw std::invalid_argument("negative queue length");
    if (static_cast<std::size_t>(e) >= buckets_.size()) buckets_.resize(e + 1);
    pos_[s] = static_cast<int>(buckets_[e].size());
    buckets_[e].push_back(s);
  }
  min_level_ = 0;
  settle_min();

  if (spec_.uses_tokens()) {
    std::bernoulli_distribution coin(spec_.kind == PolicyKind::jiq ? 1.0 : spec_.p);
    for (int s = 0; s < n_servers(); ++s) {
      if (initial_queues[s] != 0) continue;
      if (spec_.kind == PolicyKind::jiq || coin(token_rng)) add_token(s);
    }
  }
}

std::size_t Dispatcher::min_set_size() const { return buckets_[min_level_].size(); }

void Dispatcher::settle_min() {
  while (static_cast<std::size_t>(min_level_) < buckets_.size() && buckets_[min_level_].empty()) ++min_level_;
}

void Dispatcher::set_estimate(int server, int value) {
  const int old = estimates_[server];
  if (old == value) return;
  auto& from = buckets_[old];
  const int idx = pos_[server];
  from[idx] = from.back();
  pos_[from[idx]] = idx;
  from.pop_back();
  if (static_cast<std::size_t>(value) >= buckets_.size()) buckets_.resize(value + 1);
  pos_[server] = static_cast<int>(buckets_[value].size());
  buckets_[value].push_back(server);
  estimates_[server] = value;
  if (value < min_level_) {
    min_level_ = value;
  } else {
    settle_min();
  }
}

int Dispatcher::pick_jsq_d(std::span<const int> true_queues, Rng& rng) const {
  // Floyd's algorithm: d distinct indices, uniformly, without replacement.
  const int n = n_servers();
  std::vector<int> chosen;
  chosen.reserve(spec_.d);
  for (int r = n - spec_.d; r < n; ++r) {
    int t = std::uniform_int_distribution<int>(0, r)(rng);
    if (std::find(chosen.begin(), chosen.end(), t) != chosen.end()) t = r;
    chosen.push_back(t);
  }
  int best = chosen.front();
  int ties = 1;
  for (std::size_t k = 1; k < chosen.size(); ++k) {
    const int s = chosen[k];
    if (true_queues[s] < true_queues[best]) {
      best = s;
      ties = 1;
    } else if (true_queues[s] == true_queues[best]) {
      ++ties;
      if (std::uniform_int_distribution<int>(1, ties)(rng) == 1) best = s;
    }
  }
  return best;
}

void Dispatcher::add_token(int server) {
  if (token_pos_[server] >= 0) return;
  token_pos_[server] = static_cast<int>(tokens_.size());
  tokens_.push_back(server);
}

int Dispatcher::take_token(Rng& rng) {
  const int idx = std::uniform_int_distribution<int>(0, static_cast<int>(tokens_.size()) - 1)(rng);
  const int server = tokens_[idx];
  tokens_[idx] = tokens_.back();
  token_pos_[tokens_[idx]] = idx;
  tokens_.pop_back();
  token_pos_[server] = -1;
  return server;
}

Dispatch Dispatcher::dispatch(std::span<const int> true_queues, Rng& rng) {
  const int n = n_servers();
  switch (spec_.kind) {
    case PolicyKind::jsq_d:
      return {pick_jsq_d(true_queues, rng), 2 * spec_.d};
    case PolicyKind::jiq:
    case PolicyKind::jiq_p:
      if (!tokens_.empty()) return {take_token(rng), 0};
      return {std::uniform_int_distribution<int>(0, n - 1)(rng), 0};
    case PolicyKind::random:
      return {std::uniform_int_distribution<int>(0, n - 1)(rng), 0};
    case PolicyKind::round_robin: {
      const int server = static_cast<int>(rr_counter_ % n);
      ++rr_counter_;
      return {server, 0};
    }
    default: {
      const auto& candidates = buckets_[min_level_];
      const int idx = std::uniform_int_distribution<int>(0, static_cast<int>(candidates.size()) - 1)(rng);
      return {candidates[idx], 0};
    }
  }
}

void Dispatcher::on_assign(int server) {
  if (spec_.hyper_scalable()) set_estimate(server, estimates_[server] + 1);
}

int Dispatcher::on_update(int server, int true_len) {
  if (!spec_.hyper_scalable()) return 0;
  if (spec_.kind == PolicyKind::sujsq_det_idle) {
    if (true_len != 0) return 0;
    set_estimate(server, 0);
    return 1;
  }
  set_estimate(server, true_len);
  return 1;
}

int Dispatcher::on_idle(int server, Rng& token_rng) {
  if (spec_.kind == PolicyKind::jiq) {
    add_token(server);
    return 1;
  }
  if (spec_.kind == PolicyKind::jiq_p) {
    if (!std::bernoulli_distribution(spec_.p)(token_rng)) return 0;
    add_token(server);
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------

UpdateSchedule::UpdateSchedule(const PolicySpec& spec, int n_servers) : spec_(spec) {
  if (!spec_.hyper_scalable()) throw std::invalid_argument("update schedule requires a hyper-scalable policy");
  if (spec_.per_server_updates()) {
    phase_.assign(n_servers, -1.0);
    count_.assign(n_servers, 0);
    last_.assign(n_servers, 0.0);
  }
}

double UpdateSchedule::next_global(Rng& rng) {
  if (!spec_.synchronized_updates()) throw std::logic_error("policy has no global update clock");
  if (spec_.kind == PolicyKind::sujsq_exp) {
    global_last_ += std::exponential_distribution<double>(spec_.delta)(rng);
    return global_last_;
  }
  ++global_count_;
  return static_cast<double>(global_count_) / spec_.delta;
}

double UpdateSchedule::next_for_server(int server, Rng& rng) {
  if (!spec_.per_server_updates()) throw std::logic_error("policy has no per-server update clocks");
  if (spec_.kind == PolicyKind::aujsq_exp) {
    last_[server] += std::exponential_distribution<double>(spec_.delta)(rng);
    return last_[server];
  }
  const double period = 1.0 / spec_.delta;
  if (phase_[server] < 0.0) phase_[server] = std::uniform_real_distribution<double>(0.0, period)(rng);
  const double epoch = phase_[server] + static_cast<double>(count_[server]) * period;
  ++count_[server];
  return epoch;
}

}  // namespace hyperlb
