#pragma once

#include <span>
#include <vector>

namespace tmevo {

/// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct RankSumResult {
  double statistic = 0;  // rank sum of the first sample
  double p_value = 1;    // two-sided
  bool exact = false;
};

inline constexpr std::size_t kExactRankSumLimit = 12;

/// Two-sided Wilcoxon rank-sum test. The null distribution is enumerated
/// exactly when |a| + |b| <= 12; larger samples use the normal approximation
/// with tie and continuity correction.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

/// Same test with the branch forced; `exact` enumerates C(|a|+|b|, |a|) splits.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, bool exact);

}  // namespace tmevo
