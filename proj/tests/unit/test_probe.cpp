#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "layerscope/probe.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <cmath>
#include <fstream>

using namespace layerscope;

namespace {

struct Blobs {
  Matrix x;
  std::vector<int> y;
};

Blobs blobs(std::size_t n, double half_gap, std::mt19937_64& gen) {
  Blobs b{testing::gaussian(n, 2, gen), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    b.y[i] = static_cast<int>(i % 2);
    b.x(static_cast<Eigen::Index>(i), 0) += b.y[i] ? half_gap : -half_gap;
  }
  return b;
}

Eigen::VectorXd as_vector(const Eigen::VectorXd& v) { return v; }

double score_auroc(const ProbeModel& p, const Blobs& b) {
  const Eigen::VectorXd s = predict(p, b.x);
  return auroc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), b.y);
}

ProbeModel random_model(ProbeArch arch, std::size_t d, std::size_t hidden, std::mt19937_64& gen) {
  ProbeModel p = ProbeModel::zeros(arch, d, hidden);
  p.params = testing::gaussian(static_cast<std::size_t>(p.params.size()), 1, gen).col(0) * 0.7;
  return p;
}

}  // namespace

TEST_CASE("standardizer") {
  Matrix x(2, 2);
  x << 1, 5, 3, 5;
  const Standardizer s = Standardizer::fit(x);
  const Matrix z = s.apply(x);
  CHECK(z(0, 0) == doctest::Approx(-1.0));
  CHECK(z(1, 0) == doctest::Approx(1.0));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(1, 1) == 0.0);
  Matrix mean_row(1, 2);
  mean_row << 2, 5;
  CHECK(s.apply(mean_row).norm() == 0.0);
  CHECK_THROWS_AS(s.apply(Matrix(1, 3)), Error);
  CHECK_THROWS_AS(Standardizer::fit(Matrix(0, 2)), Error);
}

TEST_CASE("auroc examples and properties") {
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auroc(std::vector<double>{0.9, 0.2, 0.5, 0.1}, std::vector<int>{1, 1, 0, 0}) == 0.75);
  CHECK(auroc(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);

  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> size(2, 200), coin(0, 1), level(0, 9);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(size(gen));
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = coin(gen);
      s[i] = trial % 2 ? level(gen) : normal(gen);  // odd trials are tie-heavy
    }
    y[0] = 0;
    y[1] = 1;
    REQUIRE(auroc(s, y) == oracle::auroc_pairs(s, y));
    std::vector<double> t(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = std::exp(s[i] / 3.0);
      neg[i] = -s[i];
    }
    REQUIRE(auroc(t, y) == auroc(s, y));
    REQUIRE(auroc(neg, y) == doctest::Approx(1.0 - auroc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("probe separates blobs and not shuffled labels") {
  std::mt19937_64 gen(3);
  const Blobs train = blobs(400, 2.0, gen), val = blobs(200, 2.0, gen), test = blobs(400, 2.0, gen);
  for (ProbeArch arch : {ProbeArch::mlp, ProbeArch::linear}) {
    ProbeConfig cfg = ProbeConfig::defaults(arch);
    cfg.hidden_dim = 32;
    const TrainResult r = train_probe(train.x, train.y, val.x, val.y, cfg);
    CHECK(score_auroc(r.model, test) >= 0.99);
  }

  Blobs shuffled = train;
  std::shuffle(shuffled.y.begin(), shuffled.y.end(), gen);
  Blobs shuffled_val = val;
  std::shuffle(shuffled_val.y.begin(), shuffled_val.y.end(), gen);
  Blobs shuffled_test = test;
  std::shuffle(shuffled_test.y.begin(), shuffled_test.y.end(), gen);
  ProbeConfig cfg;
  cfg.hidden_dim = 32;
  const TrainResult r = train_probe(shuffled.x, shuffled.y, shuffled_val.x, shuffled_val.y, cfg);
  const double a = score_auroc(r.model, shuffled_test);
  CHECK(a >= 0.40);
  CHECK(a <= 0.60);

  const std::vector<int> ones(train.y.size(), 1);
  CHECK_THROWS_AS(train_probe(train.x, ones, val.x, val.y, cfg), Error);
}

TEST_CASE("training is deterministic and keeps the best checkpoint") {
  std::mt19937_64 gen(4);
  const Blobs train = blobs(300, 0.6, gen), val = blobs(100, 0.6, gen);
  ProbeConfig cfg;
  cfg.hidden_dim = 16;
  cfg.max_epochs = 30;
  cfg.patience = 3;
  const TrainResult a = train_probe(train.x, train.y, val.x, val.y, cfg);
  const TrainResult b = train_probe(train.x, train.y, val.x, val.y, cfg);
  CHECK(a.report.train_loss == b.report.train_loss);
  CHECK(a.report.val_loss == b.report.val_loss);
  CHECK(a.model.params == b.model.params);

  const auto& vl = a.report.val_loss;
  const auto best = static_cast<std::size_t>(std::min_element(vl.begin(), vl.end()) - vl.begin()) + 1;
  CHECK(a.report.best_epoch == best);
  CHECK(a.model.best_epoch == best);
  CHECK(a.model.best_val_loss == *std::min_element(vl.begin(), vl.end()));
  CHECK(mean_loss(a.model, val.x, val.y) == doctest::Approx(a.model.best_val_loss).epsilon(1e-12));
  if (a.report.stopped_early) CHECK(vl.size() == best + cfg.patience);

  std::vector<std::size_t> epochs;
  train_probe(train.x, train.y, val.x, val.y, cfg, [&](std::size_t e, const ProbeModel&) { epochs.push_back(e); });
  CHECK(epochs.front() == 0);
  CHECK(epochs.size() == vl.size() + 1);
}

TEST_CASE("per-example gradients") {
  std::mt19937_64 gen(5);
  const Matrix x = testing::gaussian(12, 4, gen);
  std::vector<int> y(12);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>((i * 7) % 3 == 0);
  const double h = 1e-5;
  for (ProbeArch arch : {ProbeArch::mlp, ProbeArch::linear}) {
    ProbeModel p = random_model(arch, 4, arch == ProbeArch::mlp ? 5 : 0, gen);
    p.standardizer = Standardizer::fit(x);
    const Matrix g = per_example_gradients(p, x, y);
    REQUIRE(g.rows() == 12);
    REQUIRE(g.cols() == p.params.size());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Matrix xi = x.row(i);
      const std::vector<int> yi{y[static_cast<std::size_t>(i)]};
      double worst = 0.0;
      for (Eigen::Index k = 0; k < p.params.size(); ++k) {
        ProbeModel plus = p, minus = p;
        plus.params[k] += h;
        minus.params[k] -= h;
        const double fd = (mean_loss(plus, xi, yi) - mean_loss(minus, xi, yi)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(i, k)));
      }
      CHECK(worst <= 1e-4);
    }
    const Eigen::VectorXd full = loss_gradient(p, x, y);
    const Eigen::VectorXd averaged = g.colwise().sum().transpose() / static_cast<double>(x.rows());
    CHECK((full - averaged).norm() <= 1e-6 * full.norm());

    const Matrix one = x.topRows(1);
    const std::vector<int> y1{y[0]};
    CHECK(as_vector(per_example_gradients(p, one, y1).row(0).transpose()) == loss_gradient(p, one, y1));
    Matrix twice(2, 4);
    twice << x.row(3), x.row(3);
    const std::vector<int> y2{y[3], y[3]};
    const Matrix g2 = per_example_gradients(p, twice, y2);
    CHECK(g2.row(0) == g2.row(1));
  }
}

TEST_CASE("predictions") {
  std::mt19937_64 gen(6);
  ProbeModel p = random_model(ProbeArch::mlp, 3, 4, gen);
  Matrix x(3, 3);
  x << 1, 2, 3, 1, 2, 3, -4, 0, 9;
  const Eigen::VectorXd s = predict(p, x);
  CHECK(s[0] == s[1]);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
  }
  CHECK_THROWS_AS(predict(p, Matrix(2, 4)), Error);
  CHECK((decision_function(p, x).array() > 0.0).matrix() == (s.array() > 0.5).matrix());
}

TEST_CASE("model files round-trip") {
  std::mt19937_64 gen(8);
  testing::TempDir tmp("probe");
  for (ProbeArch arch : {ProbeArch::mlp, ProbeArch::linear}) {
    ProbeModel p = random_model(arch, 3, arch == ProbeArch::mlp ? 4 : 0, gen);
    p.standardizer = Standardizer::fit(testing::gaussian(10, 3, gen));
    p.best_epoch = 7;
    p.best_val_loss = 0.25;
    save_probe(tmp / "m.lhpm", p);
    const ProbeModel q = load_probe(tmp / "m.lhpm");
    CHECK(q.arch == arch);
    CHECK(q.best_epoch == 7);
    CHECK(q.best_val_loss == 0.25);
    CHECK(q.params.size() == p.params.size());
    CHECK((q.params - p.params.cast<float>().cast<double>()).norm() == 0.0);
    const Matrix x = testing::gaussian(5, 3, gen);
    CHECK((predict(q, x) - predict(p, x)).cwiseAbs().maxCoeff() <= 1e-5);
  }
  {
    std::ofstream out(tmp / "bad.lhpm", std::ios::binary);
    out << "XXXXsomething";
  }
  CHECK_THROWS_AS(load_probe(tmp / "bad.lhpm"), Error);
  CHECK_THROWS_AS(load_probe(tmp / "missing.lhpm"), Error);
}
