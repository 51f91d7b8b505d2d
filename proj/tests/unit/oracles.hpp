#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace oracle {

/// Peak-rule reference, indices 1-based. Every comparison is spelled out on
/// the raw series; nothing is shared with the library.
inline bool is_peak(std::span<const double> d, std::size_t l) {
  const std::size_t n = d.size();
  const double v = d[l - 1];
  if (l > 1 && d[l - 2] == v) return false;  // not the first index of its plateau
  std::optional<double> left, right;
  for (std::size_t k = l - 1; k >= 1; --k) {
    if (d[k - 1] != v) {
      left = d[k - 1];
      break;
    }
  }
  for (std::size_t k = l + 1; k <= n; ++k) {
    if (d[k - 1] != v) {
      right = d[k - 1];
      break;
    }
  }
  if (l == n) return left && *left < v;
  if (left && !(*left < v)) return false;
  if (l > 1 && !left) {
    // Flat run from layer 1: only the first index can qualify.
    return false;
  }
  return !right || *right < v;
}

inline bool discarded(std::span<const double> d, std::size_t l, std::size_t w) {
  const std::size_t n = d.size();
  const std::size_t m = std::min(l + w, n);
  if (m == l) return false;
  if (!(d[l - 1] < d[m - 1])) return false;
  for (std::size_t k = l + 1; k + 1 <= m; ++k) {
    if (!(d[k - 1] < d[k])) return false;
  }
  return true;
}

/// Earliest surviving peak; a peak at the final layer of a series longer than
/// one is never eligible. Falls back to the shallowest peak, then to the
/// shallowest argmax.
inline std::size_t select(std::span<const double> d, std::size_t w) {
  const std::size_t n = d.size();
  std::vector<std::size_t> peaks;
  for (std::size_t l = 1; l <= n; ++l) {
    if (is_peak(d, l)) peaks.push_back(l);
  }
  for (std::size_t l : peaks) {
    if (l == n && n > 1) continue;
    if (!discarded(d, l, w)) return l;
  }
  if (!peaks.empty()) return peaks.front();
  std::size_t best = 1;
  for (std::size_t l = 2; l <= n; ++l) {
    if (d[l - 1] > d[best - 1]) best = l;
  }
  return best;
}

/// O(n^2) pairwise AUROC, ties counted one half.
inline double auroc_pairs(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

/// Calls fn on every series of each length in [1, max_len] over values 1..levels.
template <typename Fn>
void for_each_series(std::size_t max_len, int levels, Fn&& fn) {
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<double> s(len, 1.0);
    while (true) {
      fn(std::span<const double>(s));
      std::size_t k = 0;
      while (k < len && s[k] == levels) s[k++] = 1.0;
      if (k == len) break;
      s[k] += 1.0;
    }
  }
}

}  // namespace oracle
