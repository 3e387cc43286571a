#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace hyperlb {

/// System-level parameters. Service is unit-rate exponential throughout.
struct ModelParams {
  int n_servers = 1;
  double lambda = 0.5;  // arrival rate per server
  double delta = 1.0;   // update frequency per server
  static constexpr double service_rate = 1.0;

  /// Throws std::invalid_argument unless 0 < lambda < 1, delta > 0, n >= 1.
  void validate() const;
};

/// Dense storage for y(i, j) with 0 <= i <= j <= jmax, column-major in j so
/// that every estimate level j is one contiguous span.
class Triangle {
 public:
  Triangle() = default;
  explicit Triangle(int jmax);

  int jmax() const { return jmax_; }
  std::size_t size() const { return data_.size(); }

  static std::size_t offset(int j) { return static_cast<std::size_t>(j) * (j + 1) / 2; }

  double& operator()(int i, int j) { return data_[offset(j) + i]; }
  double operator()(int i, int j) const { return data_[offset(j) + i]; }

  std::span<double> column(int j) { return {data_.data() + offset(j), static_cast<std::size_t>(j) + 1}; }
  std::span<const double> column(int j) const {
    return {data_.data() + offset(j), static_cast<std::size_t>(j) + 1};
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double total() const;
  double column_total(int j) const;

  /// Copy into a triangle of a different truncation level. Mass beyond the
  /// new level must be zero.
  Triangle resized(int jmax) const;

 private:
  int jmax_ = 0;
  std::vector<double> data_;
};

/// Server occupancy counts Y_{i,j}: servers with queue length i and
/// dispatcher estimate j.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(int n_servers, std::map<std::pair<int, int>, std::int64_t> counts);

  int n_servers() const { return n_servers_; }
  const std::map<std::pair<int, int>, std::int64_t>& counts() const { return counts_; }
  std::int64_t at(int i, int j) const;

 private:
  int n_servers_ = 0;
  std::map<std::pair<int, int>, std::int64_t> counts_;
};

/// Fluid-scaled occupancy y_{i,j}. Entries are nonnegative and j <= jmax by
/// construction.
class FluidState {
 public:
  enum class Normalize { yes, no };

  FluidState() = default;
  /// Rejects negative entries and an all-zero array. With Normalize::yes the
  /// entries are rescaled to total mass 1.
  explicit FluidState(Triangle y, Normalize mode = Normalize::yes);

  static FluidState empty_system(int jmax);
  static FluidState from_counts(const CountMatrix& counts, int jmax);

  int jmax() const { return y_.jmax(); }
  double operator()(int i, int j) const { return y_(i, j); }
  const Triangle& data() const { return y_; }
  double total() const { return y_.total(); }

 private:
  Triangle y_;
};

struct DerivedFunctionals {
  std::vector<double> v;  // fraction with queue length i
  std::vector<double> w;  // fraction with queue estimate j
  std::vector<double> z;  // fraction with queue length >= k
  int m = 0;              // min{j : w_j > 0}
  double q_mass = 0.0;    // total queue mass Q = sum_k>=1 z_k
};

DerivedFunctionals derive(const Triangle& y);
DerivedFunctionals derive(const FluidState& y);
DerivedFunctionals derive(const CountMatrix& counts);

struct QueueMassSplit {
  double at_or_below = 0.0;  // Q^{<=K}
  double above = 0.0;        // Q^{>K}
};

QueueMassSplit queue_mass_split(const DerivedFunctionals& d, int level);

/// Default truncation for the fluid engines: max(2 ceil(m*) + 10, 40).
int default_jmax(double lambda, double delta);

/// Sup-norm distance between two fluid arrays, padding the shorter one.
double sup_distance(const Triangle& a, const Triangle& b);

}  // namespace hyperlb
