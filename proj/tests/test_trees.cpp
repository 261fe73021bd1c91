#include <doctest.h>

#include <cmath>

#include "mcre/error.hpp"
#include "mcre/models/trees.hpp"
#include "support.hpp"

using namespace mcre;

TEST_CASE("gbdt separates 1-d data quickly") {
  Eigen::MatrixXd x(40, 1);
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i;
    y.push_back(i >= 17 ? 1.0 : 0.0);
  }
  GbdtConfig cfg;
  cfg.max_rounds = 10;
  cfg.learning_rate = 0.3;
  const auto model = gbdt_train(x, y, x, y, cfg);
  CHECK(model.trees.size() <= 10);
  for (int i = 0; i < 40; ++i) CHECK((sigmoid(model.margin(x, i)) > 0.5) == (y[static_cast<std::size_t>(i)] == 1.0));
}

TEST_CASE("gbdt on constant features predicts the base rate") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(20, 2, 3.0);
  std::vector<double> y(20, 0.0);
  for (int i = 0; i < 5; ++i) y[static_cast<std::size_t>(i)] = 1.0;
  const auto model = gbdt_train(x, y, x, y, GbdtConfig{});
  CHECK(sigmoid(model.margin(x, 0)) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK_THROWS_AS(gbdt_train(x, std::vector<double>(20, 1.0), x, y, GbdtConfig{}), Error);
}

TEST_CASE("gbdt validation curve and early stopping") {
  auto rng = Rng::stream(3, "gbdt-es");
  Eigen::MatrixXd x(200, 3), xv(100, 3);
  std::vector<double> y, yv;
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);  // pure noise: validation loss soon rises
  }
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 3; ++j) xv(i, j) = rng.normal();
    yv.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  }
  GbdtConfig cfg;
  cfg.patience = 5;
  std::vector<double> curve;
  const auto model = gbdt_train(x, y, xv, yv, cfg, &curve);
  CHECK(curve.size() < 501);
  CHECK(curve.size() >= model.trees.size() + 1);
  const auto best = std::min_element(curve.begin(), curve.end()) - curve.begin();
  CHECK(static_cast<std::size_t>(best) == model.trees.size());
}

TEST_CASE("importance concentrates on the used feature") {
  Eigen::MatrixXd x(30, 3);
  std::vector<double> y;
  auto rng = Rng::stream(4, "imp");
  for (int i = 0; i < 30; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = i;
    x(i, 2) = 0.0;
    y.push_back(i < 15 ? 0.0 : 1.0);
  }
  GbdtConfig cfg;
  cfg.max_rounds = 1;
  cfg.tree.max_depth = 1;
  const auto model = gbdt_train(x, y, x, y, cfg);
  const auto imp = model.gain_importance(3);
  CHECK(imp[1] > 0.0);
  CHECK(imp[0] == 0.0);
  CHECK(imp[2] == 0.0);
}

TEST_CASE("ndcg and lambda gradients") {
  const std::vector<double> labels = {1, 0, 0};
  CHECK(ndcg_at_1(std::vector<double>{3, 2, 1}, labels) == 1.0);
  CHECK(ndcg_at_1(std::vector<double>{1, 2, 3}, labels) == 0.0);
  CHECK(ndcg_at_1(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}) == 0.0);

  std::vector<double> g(3, 0.0), h(3, 0.0);
  lambda_gradients(std::vector<double>{0.3, 0.1, -0.2}, std::vector<double>{0, 0, 0}, g, h);
  CHECK(g == std::vector<double>{0, 0, 0});

  // Equal scores, labels (1, 0): sigmoid(0) = 1/2 pushes symmetrically.
  std::vector<double> g2(2, 0.0), h2(2, 0.0);
  lambda_gradients(std::vector<double>{0.0, 0.0}, std::vector<double>{1, 0}, g2, h2);
  CHECK(g2[0] < 0.0);
  CHECK(g2[0] == doctest::Approx(-g2[1]));
  CHECK(std::abs(g2[0]) == doctest::Approx(0.5));
  CHECK(h2[0] == doctest::Approx(h2[1]));

  CHECK(pairwise_logistic_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{1, 0}) ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("ranker puts the relevant item first") {
  auto rng = Rng::stream(5, "rank");
  const std::size_t lists = 120;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(lists * 3), 2);
  std::vector<double> y;
  QueryGroups groups;
  for (std::size_t q = 0; q < lists; ++q) {
    const auto hit = rng.below(3);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto r = static_cast<Eigen::Index>(q * 3 + i);
      x(r, 0) = (i == hit ? 1.0 : 0.0) + 0.3 * rng.normal();
      x(r, 1) = rng.normal();
      y.push_back(i == hit ? 1.0 : 0.0);
    }
    groups.add(3);
  }
  const auto model = rank_train(x, y, groups, x, y, groups, GbdtConfig{});
  double ndcg = 0.0;
  for (std::size_t q = 0; q < lists; ++q) {
    std::vector<double> s, l;
    for (std::size_t i = 0; i < 3; ++i) {
      s.push_back(model.margin(x, static_cast<Eigen::Index>(q * 3 + i)));
      l.push_back(y[q * 3 + i]);
    }
    ndcg += ndcg_at_1(s, l);
  }
  CHECK(ndcg / static_cast<double>(lists) > 0.85);
}

TEST_CASE("random forest is seeded and bounded") {
  auto rng = Rng::stream(6, "rf");
  Eigen::MatrixXd x(100, 3);
  std::vector<double> y;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y.push_back(x(i, 0) > 0 ? 1.0 : 0.0);
  }
  ForestConfig cfg;
  cfg.num_trees = 20;
  cfg.seed = 9;
  const auto a = forest_train(x, y, cfg);
  const auto b = forest_train(x, y, cfg);
  int right = 0;
  for (int i = 0; i < 100; ++i) {
    const double p = a.predict(x, i);
    CHECK(p == b.predict(x, i));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    right += (p > 0.5) == (y[static_cast<std::size_t>(i)] == 1.0);
  }
  CHECK(right >= 90);
}
