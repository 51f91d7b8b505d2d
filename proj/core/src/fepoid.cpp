#include "layerscope/fepoid.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace layerscope {

namespace {

void check_series(std::span<const double> series) {
  if (series.empty()) throw Error(ErrorCode::empty_input, "fepoid: empty series");
  for (double v : series) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "fepoid: series contains NaN or Inf");
  }
}

}  // namespace

std::vector<std::size_t> local_maxima(std::span<const double> series) {
  std::vector<std::size_t> peaks;
  const std::size_t n = series.size();
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start;
    while (end + 1 < n && series[end + 1] == series[start]) ++end;
    const bool left_ok = start == 0 || series[start - 1] < series[start];
    const bool right_ok = end + 1 == n || series[end + 1] < series[start];
    if (left_ok && right_ok) peaks.push_back(start + 1);
    start = end + 1;
  }
  return peaks;
}

DiscardDecision discard_test(std::span<const double> series, std::size_t layer, std::size_t w) {
  const std::size_t n = series.size();
  if (layer < 1 || layer > n) throw Error(ErrorCode::invalid_argument, "discard_test: layer out of range");
  if (w < 1) throw Error(ErrorCode::invalid_argument, "forward horizon w must be at least 1");
  const std::size_t m = std::min(layer + w, n);
  if (m == layer) return {false, "last layer"};
  const double peak = series[layer - 1];
  if (!(peak < series[m - 1])) return {false, "not exceeded within horizon"};
  for (std::size_t k = layer + 1; k < m; ++k) {
    if (!(series[k - 1] < series[k])) return {false, "forward chain not strictly increasing"};
  }
  return {true, "strictly increasing through layer " + std::to_string(m)};
}

PeakScan fepoid_scan(std::span<const double> series, std::size_t w) {
  check_series(series);
  if (w < 1) throw Error(ErrorCode::invalid_argument, "forward horizon w must be at least 1");
  PeakScan scan;
  scan.series.assign(series.begin(), series.end());
  scan.w = w;
  scan.candidates = local_maxima(series);

  const std::size_t n = series.size();
  for (std::size_t layer : scan.candidates) {
    if (layer == n && n > 1) {
      scan.discarded.push_back({layer, "no forward horizon (final layer)"});
      continue;
    }
    const DiscardDecision decision = discard_test(series, layer, w);
    if (decision.discard) {
      scan.discarded.push_back({layer, decision.reason});
    } else if (scan.selected == 0) {
      scan.selected = layer;
    }
  }
  if (scan.selected == 0) {
    scan.fallback = true;
    if (!scan.candidates.empty()) {
      scan.selected = scan.candidates.front();
    } else {
      scan.selected = static_cast<std::size_t>(
                          std::max_element(series.begin(), series.end()) - series.begin()) + 1;
    }
  }
  return scan;
}

std::size_t fepoid_select(std::span<const double> series, std::size_t w) {
  return fepoid_scan(series, w).selected;
}

std::string to_json(const PeakScan& scan, int indent) {
  nlohmann::ordered_json j;
  j["series"] = scan.series;
  j["w"] = scan.w;
  j["candidates"] = scan.candidates;
  j["discarded"] = nlohmann::ordered_json::array();
  for (const auto& d : scan.discarded) {
    j["discarded"].push_back({{"layer", d.layer}, {"reason", d.reason}});
  }
  j["selected"] = scan.selected;
  j["fallback"] = scan.fallback;
  return j.dump(indent);
}

}  // namespace layerscope
