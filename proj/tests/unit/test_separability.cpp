#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "layerscope/separability.hpp"
#include "test_support.hpp"

#include <json.hpp>

using namespace layerscope;

namespace {

Matrix column(std::initializer_list<double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

double naive_silhouette(const Matrix& z, const std::vector<int>& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double same = 0.0, other = 0.0;
    int n_same = 0, n_other = 0;
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
      if (i == j) continue;
      const double d = (z.row(i) - z.row(j)).norm();
      if (y[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(j)]) {
        same += d;
        ++n_same;
      } else {
        other += d;
        ++n_other;
      }
    }
    const double a = same / n_same, b = other / n_other;
    const double m = std::max(a, b);
    total += m == 0.0 ? 0.0 : (b - a) / m;
  }
  return total / static_cast<double>(z.rows());
}

struct Labelled {
  Matrix z;
  std::vector<int> y;
};

Labelled blobs(std::size_t n, double gap, std::mt19937_64& gen) {
  Labelled b{testing::gaussian(n, 2, gen), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    b.y[i] = static_cast<int>(i % 2);
    b.z(static_cast<Eigen::Index>(i), 0) += b.y[i] * gap;
  }
  return b;
}

}  // namespace

TEST_CASE("hand-computed values") {
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(std::abs(fisher_separation(column({-1, 1, 3, 5}), y) - 8.0) <= 1e-9);
  CHECK(fisher_separation(column({-1, 1, -2, 2}), y) == 0.0);
  CHECK(silhouette(column({0, 0, 10, 10}), y) == 1.0);
  CHECK(silhouette(column({4, 4, 4, 4}), y) == 0.0);
  CHECK(std::abs(silhouette(column({0, 2, 1, 3}), y) + 0.25) <= 1e-9);
}

TEST_CASE("shifted copies follow the closed form") {
  std::mt19937_64 gen(1);
  const Matrix base = testing::gaussian(50, 4, gen);
  Eigen::RowVectorXd delta(4);
  delta << 1.0, -2.0, 0.5, 3.0;
  Matrix z(100, 4);
  z.topRows(50) = base;
  z.bottomRows(50) = base.rowwise() + delta;
  std::vector<int> y(100, 0);
  std::fill(y.begin() + 50, y.end(), 1);
  const Matrix centered = base.rowwise() - base.colwise().mean();
  const double trace = centered.squaredNorm() / 50.0;
  CHECK(fisher_separation(z, y) == doctest::Approx(delta.squaredNorm() / (2.0 * trace)).epsilon(1e-10));
}

TEST_CASE("silhouette matches a direct evaluation") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Labelled b = blobs(60 + 17 * static_cast<std::size_t>(trial), 1.5, gen);
    const double s = silhouette(b.z, b.y);
    CHECK(s == doctest::Approx(naive_silhouette(b.z, b.y)).epsilon(1e-12));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("invariances") {
  std::mt19937_64 gen(3);
  const Labelled b = blobs(200, 2.0, gen);
  const double f = fisher_separation(b.z, b.y), s = silhouette(b.z, b.y);
  Matrix moved = b.z * testing::orthogonal(2, gen);
  moved.rowwise() += Eigen::RowVector2d(5.0, -3.0);
  CHECK(testing::relative_diff(fisher_separation(moved, b.y), f) <= 1e-9);
  CHECK(testing::relative_diff(silhouette(moved, b.y), s) <= 1e-9);
  const Matrix scaled = b.z * 17.0;
  CHECK(testing::relative_diff(fisher_separation(scaled, b.y), f) <= 1e-9);
  CHECK(testing::relative_diff(silhouette(scaled, b.y), s) <= 1e-9);
}

TEST_CASE("both metrics grow with blob separation") {
  double f_prev = -1.0, s_prev = -2.0;
  for (double gap : {1.0, 2.0, 4.0}) {
    std::mt19937_64 gen(4);
    const Labelled b = blobs(500, gap, gen);
    const SeparabilityReport r = separability(b.z, b.y);
    CHECK(r.fisher > f_prev);
    CHECK(r.silhouette > s_prev);
    f_prev = r.fisher;
    s_prev = r.silhouette;
  }
}

TEST_CASE("errors, cap and report") {
  CHECK_THROWS_AS(fisher_separation(column({1, 2, 3}), std::vector<int>{0, 0, 0}), Error);
  CHECK_THROWS_AS(silhouette(column({1, 2, 3}), std::vector<int>{0, 0, 1}), Error);
  CHECK_THROWS_AS(silhouette(column({1, 2, 3}), std::vector<int>{0, 2, 1}), Error);
  CHECK_THROWS_AS(silhouette(column({1, 2}), std::vector<int>{0, 1, 1}), Error);

  std::mt19937_64 gen(5);
  const Labelled b = blobs(600, 3.0, gen);
  SilhouetteOptions capped;
  capped.cap = 200;
  capped.seed = 9;
  const double a = silhouette(b.z, b.y, capped);
  CHECK(a == silhouette(b.z, b.y, capped));
  CHECK(std::abs(a - silhouette(b.z, b.y)) < 0.05);
  capped.cap = 600;
  CHECK(silhouette(b.z, b.y, capped) == silhouette(b.z, b.y));

  const SeparabilityReport r = separability(b.z, b.y);
  CHECK(r.n_per_class[0] == 300);
  CHECK(r.n_per_class[1] == 300);
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["fisher"].get<double>() == r.fisher);
  CHECK(j["n_per_class"]["1"] == 300);
}
