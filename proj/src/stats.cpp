#include "tmevo/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace tmevo {

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  return wilcoxon_rank_sum(a, b, a.size() + b.size() <= kExactRankSumLimit);
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, bool exact) {
  if (a.empty() || b.empty()) throw std::invalid_argument("rank-sum test needs two non-empty samples");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const auto n1 = a.size();
  const auto n2 = b.size();
  const auto n = n1 + n2;

  RankSumResult result;
  result.statistic = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);
  const double mean = 0.5 * static_cast<double>(n1) * static_cast<double>(n + 1);
  const double observed = std::abs(result.statistic - mean);
  constexpr double kEps = 1e-9;

  if (exact) {
    if (n > 24) throw std::invalid_argument("exact rank-sum enumeration is limited to 24 observations");
    result.exact = true;
    std::uint64_t extreme = 0;
    std::uint64_t total = 0;
    for (std::uint32_t subset = 0; subset < (1u << n); ++subset) {
      if (static_cast<std::size_t>(std::popcount(subset)) != n1) continue;
      double w = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (subset & (1u << i)) w += ranks[i];
      }
      ++total;
      if (std::abs(w - mean) >= observed - kEps) ++extreme;
    }
    result.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    return result;
  }

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  if (n < 2) return result;
  const double dn = static_cast<double>(n);
  const double variance = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  if (variance <= 0) {
    result.p_value = 1.0;
    return result;
  }
  const double z = std::max(0.0, observed - 0.5) / std::sqrt(variance);
  result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

}  // namespace tmevo
