#pragma once

// Straight-from-the-definition loss evaluations used as independent oracles.

#include <cmath>
#include <map>
#include <vector>

#include "dgseg/rng.hpp"

namespace dgseg::testing {

using Vec = std::vector<long double>;

inline long double dot(const Vec& a, const Vec& b) {
  long double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline Vec unit(const Vec& v) {
  const long double n = std::sqrt(dot(v, v));
  Vec out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] / n;
  return out;
}

/// Anchors without a positive are skipped.
inline long double supcon_oracle(const std::vector<Vec>& z, const std::vector<int>& y, long double tau,
                                 bool mean_of_logs = false) {
  long double total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    long double denom = 0;
    for (std::size_t a = 0; a < z.size(); ++a)
      if (a != i) denom += std::exp(dot(z[i], z[a]) / tau);
    long double pos_sum = 0, log_sum = 0;
    int positives = 0;
    for (std::size_t p = 0; p < z.size(); ++p) {
      if (p == i || y[p] != y[i]) continue;
      const long double e = std::exp(dot(z[i], z[p]) / tau);
      pos_sum += e;
      log_sum += std::log(e / denom);
      ++positives;
    }
    if (positives == 0) continue;
    total += mean_of_logs ? -log_sum / positives : -std::log(pos_sum / positives / denom);
  }
  return total;
}

/// Per-class mean of L1- (or L2-) normalized vectors, keyed by class id.
inline std::map<int, Vec> centroid_oracle(const std::vector<Vec>& z, const std::vector<int>& y, bool l2 = false) {
  std::map<int, Vec> sum;
  std::map<int, int> count;
  for (std::size_t i = 0; i < z.size(); ++i) {
    long double n = 0;
    for (long double v : z[i]) n += l2 ? v * v : std::abs(v);
    if (l2) n = std::sqrt(n);
    auto& s = sum[y[i]];
    s.resize(z[i].size(), 0);
    for (std::size_t k = 0; k < z[i].size(); ++k) s[k] += z[i][k] / n;
    ++count[y[i]];
  }
  for (auto& [c, s] : sum)
    for (auto& v : s) v /= count[c];
  return sum;
}

inline long double cosine_oracle(const std::vector<Vec>& z, const std::vector<int>& y, bool all_pairs = false,
                                 bool absolute = false, bool l2 = false) {
  long double total = 0;
  for (const auto& [c, cent] : centroid_oracle(z, y, l2))
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!all_pairs && y[i] == c) continue;
      const long double denom = std::sqrt(dot(cent, cent) * dot(z[i], z[i]));
      if (!(denom > 0)) continue;  // zero-norm centroid or feature: pair skipped
      const long double cs = dot(cent, z[i]) / denom;
      total += absolute ? std::abs(cs) : cs;
    }
  return total;
}

/// Random instance: n vectors of dimension d with classes drawn from [0, k).
struct LossInstance {
  std::vector<Vec> z;
  std::vector<int> y;
};

inline LossInstance random_instance(Rng& rng, int n, int d, int k, bool normalize = true) {
  LossInstance inst;
  for (int i = 0; i < n; ++i) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    inst.z.push_back(normalize ? unit(v) : v);
    inst.y.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k))));
  }
  return inst;
}

inline double rel_err(long double a, long double b) {
  return static_cast<double>(std::abs(a - b) / std::max<long double>(1e-12L, std::max(std::abs(a), std::abs(b))));
}

}  // namespace dgseg::testing
