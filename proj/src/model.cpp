#include "hyperlb/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hyperlb {

void ModelParams::validate() const {
  if (n_servers < 1) throw std::invalid_argument("n_servers must be >= 1");
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0, 1)");
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
}

Triangle::Triangle(int jmax) : jmax_(jmax), data_(offset(jmax + 1), 0.0) {
  if (jmax < 0) throw std::invalid_argument("jmax must be nonnegative");
}

double Triangle::total() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Triangle::column_total(int j) const {
  auto c = column(j);
  return std::accumulate(c.begin(), c.end(), 0.0);
}

Triangle Triangle::resized(int jmax) const {
  Triangle out(jmax);
  for (int j = 0; j <= jmax_; ++j) {
    for (int i = 0; i <= j; ++i) {
      double value = (*this)(i, j);
      if (j > jmax) {
        if (value != 0.0) throw std::invalid_argument("resize would drop mass above jmax");
        continue;
      }
      out(i, j) = value;
    }
  }
  return out;
}

CountMatrix::CountMatrix(int n_servers, std::map<std::pair<int, int>, std::int64_t> counts)
    : n_servers_(n_servers), counts_(std::move(counts)) {
  std::int64_t sum = 0;
  for (auto it = counts_.begin(); it != counts_.end();) {
    auto [i, j] = it->first;
    if (i < 0 || i > j) throw std::invalid_argument("count entries require 0 <= i <= j");
    if (it->second < 0) throw std::invalid_argument("negative server count");
    sum += it->second;
    if (it->second == 0) {
      it = counts_.erase(it);
    } else {
      ++it;
    }
  }
  if (sum != n_servers_) {
    throw std::invalid_argument("counts sum to " + std::to_string(sum) + ", expected " +
                                std::to_string(n_servers_));
  }
}

std::int64_t CountMatrix::at(int i, int j) const {
  auto it = counts_.find({i, j});
  return it == counts_.end() ? 0 : it->second;
}

FluidState::FluidState(Triangle y, Normalize mode) : y_(std::move(y)) {
  double sum = 0.0;
  for (double value : y_.raw()) {
    if (value < 0.0 || !std::isfinite(value)) throw std::invalid_argument("fluid state entries must be finite and >= 0");
    sum += value;
  }
  if (sum <= 0.0) throw std::invalid_argument("fluid state has zero total mass");
  if (mode == Normalize::yes) {
    for (double& value : y_.raw()) value /= sum;
  }
}

FluidState FluidState::empty_system(int jmax) {
  Triangle y(jmax);
  y(0, 0) = 1.0;
  return FluidState(std::move(y));
}

FluidState FluidState::from_counts(const CountMatrix& counts, int jmax) {
  Triangle y(jmax);
  for (const auto& [key, n] : counts.counts()) {
    if (key.second > jmax) throw std::invalid_argument("count matrix exceeds jmax");
    y(key.first, key.second) = static_cast<double>(n) / counts.n_servers();
  }
  return FluidState(std::move(y), Normalize::no);
}

namespace {

void finish(DerivedFunctionals& d) {
  std::size_t levels = std::max(d.v.size(), std::size_t{1});
  d.v.resize(levels, 0.0);
  d.z.assign(levels + 1, 0.0);
  for (std::size_t k = levels; k-- > 0;) d.z[k] = d.z[k + 1] + d.v[k];
  d.q_mass = 0.0;
  for (std::size_t k = 1; k < d.z.size(); ++k) d.q_mass += d.z[k];
  d.m = 0;
  for (std::size_t j = 0; j < d.w.size(); ++j) {
    if (d.w[j] > 0.0) {
      d.m = static_cast<int>(j);
      break;
    }
  }
}

}  // namespace

DerivedFunctionals derive(const Triangle& y) {
  DerivedFunctionals d;
  const int jmax = y.jmax();
  d.v.assign(jmax + 1, 0.0);
  d.w.assign(jmax + 1, 0.0);
  for (int j = 0; j <= jmax; ++j) {
    auto col = y.column(j);
    double w = 0.0;
    for (int i = 0; i <= j; ++i) {
      w += col[i];
      d.v[i] += col[i];
    }
    d.w[j] = w;
  }
  finish(d);
  return d;
}

DerivedFunctionals derive(const FluidState& y) { return derive(y.data()); }

DerivedFunctionals derive(const CountMatrix& counts) {
  DerivedFunctionals d;
  int jmax = 0;
  for (const auto& [key, n] : counts.counts()) jmax = std::max(jmax, key.second);
  d.v.assign(jmax + 1, 0.0);
  d.w.assign(jmax + 1, 0.0);
  const double scale = 1.0 / counts.n_servers();
  for (const auto& [key, n] : counts.counts()) {
    d.v[key.first] += n * scale;
    d.w[key.second] += n * scale;
  }
  finish(d);
  return d;
}

QueueMassSplit queue_mass_split(const DerivedFunctionals& d, int level) {
  if (level < 0) throw std::invalid_argument("queue mass level must be >= 0");
  QueueMassSplit split;
  for (std::size_t i = 1; i < d.v.size(); ++i) {
    const double len = static_cast<double>(i);
    split.at_or_below += std::min(len, static_cast<double>(level)) * d.v[i];
    if (static_cast<int>(i) > level) split.above += (len - level) * d.v[i];
  }
  return split;
}

int default_jmax(double lambda, double delta) {
  const double m_star = std::floor(-std::log1p(-lambda) / std::log1p(delta));
  return std::max(2 * static_cast<int>(std::ceil(m_star)) + 10, 40);
}

double sup_distance(const Triangle& a, const Triangle& b) {
  const int jmax = std::max(a.jmax(), b.jmax());
  double worst = 0.0;
  for (int j = 0; j <= jmax; ++j) {
    for (int i = 0; i <= j; ++i) {
      const double x = j <= a.jmax() ? a(i, j) : 0.0;
      const double y = j <= b.jmax() ? b(i, j) : 0.0;
      worst = std::max(worst, std::abs(x - y));
    }
  }
  return worst;
}

}  // namespace hyperlb
