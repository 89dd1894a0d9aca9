#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "condense/errors.hpp"

namespace condense {

/// Area under the ROC curve via the Mann-Whitney rank sum.
///
/// Scores are ranked with average ranks for ties, so the result equals
/// (#pairs with pos > neg + 0.5 * #tied pairs) / (P * N), which is also the
/// trapezoidal ROC area. Throws DataError if only one class is present.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auroc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw DataError("auroc undefined: labels contain a single class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (doubled) ranks of the positives; ranks are 1-based, ties averaged.
  double pos_rank_sum2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum2 += avg_rank2;
    }
    i = j;
  }
  const double p = static_cast<double>(positives), q = static_cast<double>(negatives);
  const double u = pos_rank_sum2 / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * q);
}

inline double auroc(std::span<const float> scores, std::span<const int> labels) {
  std::vector<double> s(scores.begin(), scores.end());
  return auroc(std::span<const double>(s), labels);
}

}  // namespace condense
