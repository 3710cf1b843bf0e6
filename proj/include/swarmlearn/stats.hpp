#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "swarmlearn/errors.hpp"

namespace swarmlearn::stats {

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw config_error("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by N).
inline double stddev(const std::vector<double>& xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

struct RankTest {
  double u = 0.0;  // U statistic of the first sample
  double z = 0.0;
  double p = 1.0;  // two-sided
};

/// Mann-Whitney U test with the tie-corrected normal approximation and a
/// continuity correction.
inline RankTest mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n1 = a.size(), n2 = b.size();
  if (n1 == 0 || n2 == 0) throw config_error("rank test needs two non-empty samples");
  std::vector<std::pair<double, int>> all;
  for (double x : a) all.push_back({x, 0});
  for (double x : b) all.push_back({x, 1});
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
  const double n = static_cast<double>(n1 + n2);
  double rank_a = 0.0, ties = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    for (std::size_t q = i; q < j; ++q)
      if (all[q].second == 0) rank_a += avg;
    i = j;
  }
  RankTest out;
  const double d1 = static_cast<double>(n1), d2 = static_cast<double>(n2);
  out.u = rank_a - d1 * (d1 + 1.0) / 2.0;
  const double mu = d1 * d2 / 2.0;
  const double var = d1 * d2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (var <= 0.0) return out;
  const double diff = std::abs(out.u - mu);
  out.z = std::max(0.0, diff - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(out.z / std::sqrt(2.0)));
  return out;
}

}  // namespace swarmlearn::stats
