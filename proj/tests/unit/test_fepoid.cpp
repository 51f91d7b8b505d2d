#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "layerscope/fepoid.hpp"
#include "oracles.hpp"

#include <json.hpp>

#include <cmath>

using namespace layerscope;

namespace {
using V = std::vector<double>;
using I = std::vector<std::size_t>;
}  // namespace

TEST_CASE("local maxima") {
  CHECK(local_maxima(V{1, 3, 2, 2, 5, 4}) == I{2, 5});
  CHECK(local_maxima(V{1, 3, 3, 1}) == I{2});
  CHECK(local_maxima(V{1, 2, 3}) == I{3});
  CHECK(local_maxima(V{3, 2, 1}) == I{1});
  CHECK(local_maxima(V{2, 2, 2}) == I{1});
  CHECK(local_maxima(V{1, 2, 2, 3}) == I{4});
  CHECK(local_maxima(V{4, 4, 1, 4, 4}) == I{1, 4});
}

TEST_CASE("discard test") {
  const DiscardDecision a = discard_test(V{1, 3, 2, 4, 5, 4}, 2, 3);
  CHECK(a.discard);
  CHECK(a.reason == "strictly increasing through layer 5");
  const DiscardDecision b = discard_test(V{1, 3, 2, 2, 5, 4}, 2, 2);
  CHECK_FALSE(b.discard);
  CHECK(b.reason == "not exceeded within horizon");
  CHECK_FALSE(discard_test(V{1, 3, 2, 4, 5, 4}, 6, 3).discard);
  CHECK(discard_test(V{1, 3, 2, 4, 5, 4}, 6, 3).reason == "last layer");
  CHECK(discard_test(V{5, 1, 1, 7}, 1, 3).reason == "forward chain not strictly increasing");
  CHECK_THROWS_AS(discard_test(V{1, 2}, 3, 1), Error);
  CHECK_THROWS_AS(discard_test(V{1, 2}, 1, 0), Error);
}

TEST_CASE("selection worked examples") {
  CHECK(fepoid_select(V{1, 3, 2, 2, 5, 4}, 2) == 2);
  CHECK(fepoid_select(V{1, 3, 2, 4, 5, 4}, 3) == 5);
  const PeakScan scan = fepoid_scan(V{1, 3, 2, 4, 6, 8}, 3);
  CHECK(scan.selected == 2);
  CHECK(scan.fallback);
  CHECK(scan.candidates == I{2, 6});
  REQUIRE(scan.discarded.size() == 2);
  CHECK(scan.discarded[0].layer == 2);
  CHECK(scan.discarded[1].layer == 6);
}

TEST_CASE("fallbacks and input checks") {
  CHECK(fepoid_select(V{7}, 7) == 1);
  CHECK(fepoid_select(V{1, 2, 3, 4}, 1) == 4);
  CHECK(fepoid_scan(V{1, 2, 3, 4}, 1).fallback);
  CHECK(fepoid_select(V{4, 3, 2}, 7) == 1);
  CHECK_FALSE(fepoid_scan(V{4, 3, 2}, 7).fallback);
  CHECK_THROWS_AS(fepoid_select(V{}, 7), Error);
  CHECK_THROWS_AS(fepoid_select(V{1, std::nan("")}, 7), Error);
  CHECK_THROWS_AS(fepoid_select(V{1, 2}, 0), Error);
}

TEST_CASE("exhaustive agreement with the reference rule") {
  std::size_t checked = 0;
  oracle::for_each_series(8, 4, [&](std::span<const double> s) {
    if (s.size() > 1) {
      I expected;
      for (std::size_t l = 1; l <= s.size(); ++l) {
        if (oracle::is_peak(s, l)) expected.push_back(l);
      }
      REQUIRE(local_maxima(s) == expected);
    }
    for (std::size_t w = 1; w <= 7; ++w) {
      const PeakScan scan = fepoid_scan(s, w);
      REQUIRE(scan.selected == oracle::select(s, w));
      if (!scan.candidates.empty()) {
        REQUIRE(std::find(scan.candidates.begin(), scan.candidates.end(), scan.selected) != scan.candidates.end());
      }
      ++checked;
    }
  });
  CHECK(checked == 7 * (4 + 16 + 64 + 256 + 1024 + 4096 + 16384 + 65536));
}

TEST_CASE("horizon one selects the first eligible peak") {
  oracle::for_each_series(7, 3, [&](std::span<const double> s) {
    const PeakScan scan = fepoid_scan(s, 1);
    CHECK(scan.discarded.size() <= 1);
    if (!scan.fallback) CHECK(scan.selected == scan.candidates.front());
  });
}

TEST_CASE("invariance under increasing transforms") {
  oracle::for_each_series(6, 4, [&](std::span<const double> s) {
    V t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double x) { return std::log(x) * 10.0 + 2.0; });
    for (std::size_t w = 1; w <= 5; ++w) CHECK(fepoid_select(s, w) == fepoid_select(t, w));
  });
}

TEST_CASE("survivors are not monotone in the horizon") {
  // A short horizon can end on a dip that a longer one steps past, and vice versa.
  const V a{1, 3, 2, 4, 1};
  CHECK(discard_test(a, 2, 2).discard);
  CHECK_FALSE(discard_test(a, 2, 3).discard);
  const V b{5, 1, 2, 3, 6, 1};
  CHECK_FALSE(discard_test(b, 1, 2).discard);
  CHECK(discard_test(b, 1, 4).discard);
}

TEST_CASE("scan serialises to json") {
  const PeakScan scan = fepoid_scan(V{1, 3, 2, 4, 5, 4}, 3);
  const auto j = nlohmann::json::parse(to_json(scan));
  CHECK(j["selected"] == 5);
  CHECK(j["w"] == 3);
  CHECK(j["candidates"] == nlohmann::json::array({2, 5}));
  CHECK(j["discarded"][0]["layer"] == 2);
  CHECK(j["discarded"][0]["reason"] == "strictly increasing through layer 5");
  CHECK(j["fallback"] == false);
  CHECK(j["series"].size() == 6);
  CHECK(to_json(scan, -1).find('\n') == std::string::npos);
}
