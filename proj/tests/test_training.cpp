#include <doctest.h>

#include <cmath>

#include "mcre/error.hpp"
#include "mcre/training.hpp"
#include "support.hpp"

using namespace mcre;

namespace {

/// Quadratic pull of every parameter towards 1.
class Quadratic : public Objective {
 public:
  explicit Quadratic(std::size_t units) : units_(units) {}
  std::size_t num_units() const override { return units_; }
  LossSum loss_grad(const Eigen::VectorXd& p, std::span<const std::size_t> units, Eigen::VectorXd* grad,
                    Rng*) const override {
    const Eigen::VectorXd diff = p.array() - 1.0;
    if (grad) *grad += static_cast<double>(units.size()) * diff;
    return {0.5 * diff.squaredNorm() * static_cast<double>(units.size()), units.size()};
  }

 private:
  std::size_t units_;
};

/// Replays a fixed sequence of validation losses, one per evaluation.
class Scripted : public Objective {
 public:
  explicit Scripted(std::vector<double> losses) : losses_(std::move(losses)) {}
  std::size_t num_units() const override { return 1; }
  LossSum loss_grad(const Eigen::VectorXd&, std::span<const std::size_t>, Eigen::VectorXd*, Rng*) const override {
    const double l = losses_.at(std::min(calls_, losses_.size() - 1));
    ++calls_;
    return {l, 1};
  }

 private:
  std::vector<double> losses_;
  mutable std::size_t calls_ = 0;
};

}  // namespace

TEST_CASE("quantiles and clip bounds") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  CHECK(quantile_sorted(v, 0.01) == doctest::Approx(1.99));
  CHECK(quantile_sorted(v, 0.99) == doctest::Approx(99.01));
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 100.0);

  Eigen::MatrixXd x(100, 1);
  for (int i = 0; i < 100; ++i) x(i, 0) = i + 1;
  const auto st = fit_standardizer(x, {false});
  CHECK(st.clip_low[0] == doctest::Approx(1.99));
  CHECK(st.clip_high[0] == doctest::Approx(99.01));
}

TEST_CASE("standardizer properties") {
  auto rng = Rng::stream(9, "std");
  for (int t = 0; t < 20; ++t) {
    const Eigen::Index n = 50 + static_cast<Eigen::Index>(rng.below(200));
    Eigen::MatrixXd x(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.normal() * 10 + 3;
      x(i, 1) = std::exp(3 * rng.normal());  // heavy tail, clipping matters
      x(i, 2) = 4.0;                         // constant
      x(i, 3) = rng.bernoulli(0.3) ? 1.0 : 0.0;
      x(i, 4) = static_cast<double>(rng.below(5));
    }
    const std::vector<bool> cat = {false, false, false, true, false};
    const auto st = fit_standardizer(x, cat);
    const auto z = apply_standardizer(st, x);
    for (Eigen::Index j : {0, 1, 4}) {
      const double mean = z.col(j).mean();
      const double var = (z.col(j).array() - mean).square().mean();
      CHECK(std::abs(mean) <= 1e-9);
      CHECK(std::abs(var - 1.0) <= 1e-6);
      CHECK(st.clip_low[static_cast<std::size_t>(j)] <= st.clip_high[static_cast<std::size_t>(j)]);
      CHECK(st.std[static_cast<std::size_t>(j)] >= 0.0);
    }
    CHECK(z.col(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.col(3) == x.col(3));

    // Values beyond the training bounds transform like the bound itself.
    Eigen::MatrixXd far = x.topRows(1);
    far(0, 1) = 1e12;
    Eigen::MatrixXd at = far;
    at(0, 1) = st.clip_high[1];
    CHECK(apply_standardizer(st, far)(0, 1) == apply_standardizer(st, at)(0, 1));
  }
}

TEST_CASE("standardizer statistics come from training rows only") {
  Eigen::MatrixXd train(4, 1), test(2, 1);
  train << 1, 2, 3, 4;
  test << 100, -100;
  const auto st = fit_standardizer(train, {false});
  Eigen::MatrixXd both(6, 1);
  both << 1, 2, 3, 4, 100, -100;
  const auto st2 = fit_standardizer(both, {false});
  CHECK(st.clip_high[0] < st2.clip_high[0]);
  const auto z = apply_standardizer(st, test);
  CHECK(z(0, 0) == apply_standardizer(st, Eigen::MatrixXd::Constant(1, 1, st.clip_high[0]))(0, 0));
}

TEST_CASE("adam step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  ParamLayout layout;
  layout.add("w", 3, 1);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 0.5);
  AdamState st;
  adam_step(p, Eigen::VectorXd::Zero(3), st, cfg, &layout);
  CHECK(p == Eigen::VectorXd::Constant(3, 0.5));

  AdamState st2;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 1e-3;
  adam_step(q, g, st2, cfg, &layout);
  // Bias-corrected first step: m_hat / sqrt(v_hat) = sign(g).
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(q[i] + 0.01 * (g[i] > 0 ? 1 : -1)) < 1e-7);

  g[1] = std::nan("");
  try {
    adam_step(q, g, st2, cfg, &layout);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("w[1]") != std::string::npos);
  }
}

TEST_CASE("early stopping patience arithmetic") {
  EarlyStopping es(5);
  const std::vector<double> losses = {1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99};
  int stopped = 0;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, static_cast<double>(e + 1));
    if (es.update(static_cast<int>(e + 1), losses[e], p)) {
      stopped = static_cast<int>(e + 1);
      break;
    }
  }
  CHECK(stopped == 7);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_params()[0] == 2.0);
}

TEST_CASE("train loop restores the best snapshot") {
  ParamLayout layout;
  layout.add("w", 2, 1);
  Quadratic train(10);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 4;
  cfg.seed = 3;

  Scripted val({1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.5});
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
  const auto h = train_loop(p, train, val, cfg, layout);
  CHECK(h.epochs.size() == 7);
  CHECK(h.best_epoch == 2);

  // Replaying two epochs by hand gives the same snapshot.
  Scripted val2({1.0, 0.9});
  TrainConfig two = cfg;
  two.max_epochs = 2;
  Eigen::VectorXd p2 = Eigen::VectorXd::Zero(2);
  train_loop(p2, train, val2, two, layout);
  CHECK(p == p2);

  Scripted val1({3.0});
  TrainConfig one = cfg;
  one.max_epochs = 1;
  Eigen::VectorXd p1 = Eigen::VectorXd::Zero(2);
  const auto h1 = train_loop(p1, train, val1, one, layout);
  CHECK(h1.epochs.size() == 1);
  CHECK(h1.best_epoch == 1);
  CHECK(p1 != Eigen::VectorXd::Zero(2));

  CHECK(history_csv(h1).rfind("epoch,train_loss,val_loss\n1,", 0) == 0);
}

TEST_CASE("glorot init zeroes biases") {
  ParamLayout layout;
  layout.add("l.W", 4, 3);
  layout.add("l.b", 1, 3);
  Eigen::VectorXd p;
  auto rng = Rng::stream(1, "init");
  glorot_init(layout, p, rng);
  CHECK(layout.view(p, 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(layout.view(p, 0).cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 7.0));
  CHECK(layout.view(p, 0).cwiseAbs().maxCoeff() > 0.0);
  CHECK(layout.describe(5) == "l.W[1,1]");
}
