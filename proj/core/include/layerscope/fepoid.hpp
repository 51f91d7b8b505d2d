#pragma once

#include "layerscope/common.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace layerscope {

/// First effective peak of the per-layer intrinsic-dimension curve.
///
/// Candidates are the local maxima of the series. A candidate at layer l is
/// discarded when the series keeps climbing strictly over the next w layers;
/// the earliest surviving candidate is selected.

inline constexpr std::size_t kDefaultHorizon = 7;

/// 1-based peak layers in ascending order. A layer is a peak when the nearest
/// differing value on its left is smaller (or absent, for layer 1) and the
/// nearest differing value on its right is smaller or absent. A plateau is
/// represented by its first layer. The last layer needs a smaller value on
/// its left.
std::vector<std::size_t> local_maxima(std::span<const double> series);

struct DiscardDecision {
  bool discard = false;
  std::string reason;
};

/// With m = min(l + w, L): discard iff d(l) < d(m) and d(l+1) < ... < d(m).
/// The last layer is never discarded by this test.
DiscardDecision discard_test(std::span<const double> series, std::size_t layer, std::size_t w);

struct DiscardedPeak {
  std::size_t layer = 0;
  std::string reason;
};

struct PeakScan {
  std::vector<double> series;
  std::size_t w = kDefaultHorizon;
  std::vector<std::size_t> candidates;
  std::vector<DiscardedPeak> discarded;
  std::size_t selected = 0;
  bool fallback = false;  ///< no candidate survived (or none existed)
};

/// Full scan. A peak at the last layer has no layers ahead of it to confirm it
/// and is not eligible for selection; it is listed under `discarded`. When no
/// candidate survives the shallowest candidate is returned, and when there
/// are no candidates the argmax (shallowest on ties).
PeakScan fepoid_scan(std::span<const double> series, std::size_t w = kDefaultHorizon);

std::size_t fepoid_select(std::span<const double> series, std::size_t w = kDefaultHorizon);

/// {"series": [...], "w": .., "candidates": [...],
///  "discarded": [{"layer": .., "reason": ".."}], "selected": .., "fallback": ..}
std::string to_json(const PeakScan& scan, int indent = 2);

}  // namespace layerscope
