#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "rankpool/core_types.hpp"

namespace rankpool {

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

/// Fraction of class-c examples predicted as c; NaN for classes without examples.
inline std::vector<double> per_class_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth,
                                              std::size_t num_classes) {
  std::vector<double> hit(num_classes, 0.0), total(num_classes, 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(truth[i]);
    if (c >= num_classes) continue;
    total[c] += 1.0;
    hit[c] += predicted[i] == truth[i];
  }
  std::vector<double> out(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c)
    out[c] = total[c] > 0.0 ? hit[c] / total[c] : std::numeric_limits<double>::quiet_NaN();
  return out;
}

/// Average precision of a ranking: items sorted by descending score (ties
/// keep input order); AP is the mean over positives of
/// (positives ranked at or above it) / (its rank). NaN without positives.
inline double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InvalidInput("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positive[order[r]]) continue;
    ++seen;
    sum += static_cast<double>(seen) / static_cast<double>(r + 1);
  }
  return seen ? sum / static_cast<double>(seen) : std::numeric_limits<double>::quiet_NaN();
}

/// Mean over classes (with at least one positive) of one-vs-rest AP.
inline double mean_average_precision(const std::vector<Vector>& scores, const std::vector<int>& truth,
                                     std::size_t num_classes) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<double> s(scores.size());
    std::vector<bool> pos(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][static_cast<Eigen::Index>(c)];
      pos[i] = truth[i] == static_cast<int>(c);
    }
    const double ap = average_precision(s, pos);
    if (std::isnan(ap)) continue;
    sum += ap;
    ++used;
  }
  return used ? sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace rankpool
