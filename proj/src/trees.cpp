#include "mcre/models/trees.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mcre/error.hpp"
#include "mcre/rng.hpp"

namespace mcre {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_loss(double margin, double label) {
  // log(1 + exp(-m)) for y = 1 and log(1 + exp(m)) for y = 0, computed stably.
  const double m = label > 0.5 ? -margin : margin;
  return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

double RegressionTree::predict(const Eigen::MatrixXd& x, Eigen::Index row) const {
  if (nodes.empty()) return 0.0;
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = x(row, n.feature) < n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

int RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

TreeLearner::TreeLearner(const Eigen::MatrixXd& x, std::vector<std::size_t> rows) : x_(x), rows_(std::move(rows)) {
  sorted_.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& s = sorted_[static_cast<std::size_t>(f)];
    s = rows_;
    std::stable_sort(s.begin(), s.end(), [&](std::size_t a, std::size_t b) {
      return x_(static_cast<Eigen::Index>(a), f) < x_(static_cast<Eigen::Index>(b), f);
    });
  }
}

RegressionTree TreeLearner::fit(std::span<const double> grad, std::span<const double> hess, const TreeParams& params,
                                double shrinkage, const std::vector<bool>& allowed) const {
  RegressionTree tree;
  struct NodeStats {
    double g = 0;
    double h = 0;
  };
  std::vector<NodeStats> stats;
  const auto leaf_value = [&](const NodeStats& s) { return -s.g / (s.h + params.lambda) * shrinkage; };
  const auto score = [&](double g, double h) { return g * g / (h + params.lambda); };

  // node_of[row] = node id, or -1 when the row is not in the training subset.
  std::vector<int> node_of(static_cast<std::size_t>(x_.rows()), -1);
  NodeStats root;
  for (auto r : rows_) {
    node_of[r] = 0;
    root.g += grad[r];
    root.h += hess[r];
  }
  tree.nodes.push_back({});
  tree.nodes[0].value = leaf_value(root);
  stats.push_back(root);

  std::vector<int> open = {0};
  for (int depth = 0; depth < params.max_depth && !open.empty(); ++depth) {
    struct Best {
      double gain = 0;
      int feature = -1;
      double threshold = 0;
    };
    struct Scan {
      double gl = 0;
      double hl = 0;
      double last = 0;
      bool has_last = false;
    };
    std::vector<Best> best(tree.nodes.size());
    std::vector<char> is_open(tree.nodes.size(), 0);
    for (int n : open) is_open[static_cast<std::size_t>(n)] = 1;

    for (std::size_t f = 0; f < sorted_.size(); ++f) {
      if (!allowed.empty() && !allowed[f]) continue;
      std::vector<Scan> scan(tree.nodes.size());
      const auto col = static_cast<Eigen::Index>(f);
      for (auto r : sorted_[f]) {
        const int nd = node_of[r];
        if (nd < 0 || !is_open[static_cast<std::size_t>(nd)]) continue;
        auto& s = scan[static_cast<std::size_t>(nd)];
        const double x = x_(static_cast<Eigen::Index>(r), col);
        if (s.has_last && x != s.last) {
          const auto& tot = stats[static_cast<std::size_t>(nd)];
          const double gr = tot.g - s.gl;
          const double hr = tot.h - s.hl;
          if (s.hl >= params.min_child_weight && hr >= params.min_child_weight) {
            const double gain = 0.5 * (score(s.gl, s.hl) + score(gr, hr) - score(tot.g, tot.h));
            auto& b = best[static_cast<std::size_t>(nd)];
            if (gain > b.gain + 1e-12) {
              double thr = 0.5 * (s.last + x);
              if (!(thr > s.last && thr <= x)) thr = x;
              b = {gain, static_cast<int>(f), thr};
            }
          }
        }
        s.gl += grad[r];
        s.hl += hess[r];
        s.last = x;
        s.has_last = true;
      }
    }

    std::vector<int> next_open;
    for (int n : open) {
      const auto& b = best[static_cast<std::size_t>(n)];
      if (b.feature < 0 || b.gain <= params.min_split_gain) continue;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      stats.push_back({});
      stats.push_back({});
      auto& node = tree.nodes[static_cast<std::size_t>(n)];
      node.feature = b.feature;
      node.threshold = b.threshold;
      node.left = left;
      node.right = left + 1;
      node.gain = b.gain;
      next_open.push_back(left);
      next_open.push_back(left + 1);
    }
    for (auto r : rows_) {
      const int nd = node_of[r];
      const auto& node = tree.nodes[static_cast<std::size_t>(nd)];
      if (node.is_leaf()) continue;
      const int child = x_(static_cast<Eigen::Index>(r), node.feature) < node.threshold ? node.left : node.right;
      node_of[r] = child;
      stats[static_cast<std::size_t>(child)].g += grad[r];
      stats[static_cast<std::size_t>(child)].h += hess[r];
    }
    for (int n : next_open) tree.nodes[static_cast<std::size_t>(n)].value = leaf_value(stats[static_cast<std::size_t>(n)]);
    for (auto& node : tree.nodes)
      if (!node.is_leaf()) node.value = 0.0;
    open = std::move(next_open);
  }
  return tree;
}

double BoostedTrees::margin(const Eigen::MatrixXd& x, Eigen::Index row) const {
  double m = base_score;
  for (const auto& t : trees) m += t.predict(x, row);
  return m;
}

std::vector<double> BoostedTrees::gain_importance(std::size_t num_features) const {
  std::vector<double> gain(num_features, 0.0);
  for (const auto& t : trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) gain.at(static_cast<std::size_t>(n.feature)) += n.gain;
  return gain;
}

namespace {

double mean_logistic_loss(std::span<const double> margins, std::span<const double> labels) {
  if (margins.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) s += logistic_loss(margins[i], labels[i]);
  return s / static_cast<double>(margins.size());
}

std::vector<std::size_t> all_rows(Eigen::Index n) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

BoostedTrees gbdt_train(const Eigen::MatrixXd& x_train, std::span<const double> y_train,
                        const Eigen::MatrixXd& x_val, std::span<const double> y_val, const GbdtConfig& config,
                        std::vector<double>* val_curve) {
  const auto n = static_cast<std::size_t>(x_train.rows());
  if (y_train.size() != n || y_val.size() != static_cast<std::size_t>(x_val.rows()))
    throw Error("gbdt_train: label count mismatch");
  const double positives = std::accumulate(y_train.begin(), y_train.end(), 0.0);
  if (n == 0 || positives <= 0.0 || positives >= static_cast<double>(n))
    throw Error("gbdt_train: degenerate single-class training set");

  BoostedTrees model;
  model.learning_rate = config.learning_rate;
  model.max_depth = config.tree.max_depth;
  const double rate = positives / static_cast<double>(n);
  model.base_score = std::log(rate / (1.0 - rate));

  TreeLearner learner(x_train, all_rows(x_train.rows()));
  std::vector<double> margin(n, model.base_score);
  std::vector<double> val_margin(y_val.size(), model.base_score);
  std::vector<double> grad(n), hess(n);

  std::vector<double> curve = {mean_logistic_loss(val_margin, y_val)};
  double best_loss = curve.front();
  std::size_t best_rounds = 0;
  int since = 0;
  for (int round = 1; round <= config.max_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = p - y_train[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    auto tree = learner.fit(grad, hess, config.tree, config.learning_rate);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(x_train, static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < val_margin.size(); ++i)
      val_margin[i] += tree.predict(x_val, static_cast<Eigen::Index>(i));
    model.trees.push_back(std::move(tree));
    const double loss = y_val.empty() ? mean_logistic_loss(margin, y_train) : mean_logistic_loss(val_margin, y_val);
    curve.push_back(loss);
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      best_rounds = model.trees.size();
      since = 0;
    } else if (++since >= config.patience) {
      break;
    }
  }
  model.trees.resize(best_rounds);
  if (val_curve) *val_curve = std::move(curve);
  return model;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double ndcg_at_1(std::span<const double> scores, std::span<const double> labels) {
  if (scores.empty()) throw Error("ndcg_at_1: empty list");
  const double ideal = *std::max_element(labels.begin(), labels.end()) > 0.5 ? 1.0 : 0.0;
  if (ideal == 0.0) return 0.0;
  return labels[rank_order(scores).front()] > 0.5 ? 1.0 : 0.0;
}

void lambda_gradients(std::span<const double> scores, std::span<const double> labels, std::span<double> grad,
                      std::span<double> hess) {
  const std::size_t n = scores.size();
  if (n == 0) throw Error("lambda_gradients: empty list");
  const auto order = rank_order(scores);
  std::vector<std::size_t> position(n);
  for (std::size_t p = 0; p < n; ++p) position[order[p]] = p;
  // With binary gains and truncation at 1, swapping a pair changes NDCG@1
  // by exactly 1 when one of the pair holds the top slot, else by 0.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!(labels[i] > labels[j])) continue;
      const double delta = (position[i] == 0 || position[j] == 0) ? 1.0 : 0.0;
      if (delta == 0.0) continue;
      const double rho = sigmoid(-(scores[i] - scores[j]));
      grad[i] -= rho * delta;
      grad[j] += rho * delta;
      const double h = std::max(rho * (1.0 - rho), 1e-16) * delta;
      hess[i] += h;
      hess[j] += h;
    }
  }
}

double pairwise_logistic_loss(std::span<const double> scores, std::span<const double> labels) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[i] > labels[j]) {
        total += logistic_loss(scores[i] - scores[j], 1.0);
        ++pairs;
      }
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

BoostedTrees rank_train(const Eigen::MatrixXd& x_train, std::span<const double> y_train,
                        const QueryGroups& groups_train, const Eigen::MatrixXd& x_val,
                        std::span<const double> y_val, const QueryGroups& groups_val, const GbdtConfig& config) {
  const auto n = static_cast<std::size_t>(x_train.rows());
  if (groups_train.offsets.back() != n || groups_val.offsets.back() != static_cast<std::size_t>(x_val.rows()))
    throw Error("rank_train: group offsets do not cover the rows");
  for (std::size_t q = 0; q < groups_train.size(); ++q)
    if (groups_train.offsets[q + 1] == groups_train.offsets[q]) throw Error("rank_train: empty list");

  BoostedTrees model;
  model.learning_rate = config.learning_rate;
  model.max_depth = config.tree.max_depth;
  model.base_score = 0.0;

  TreeLearner learner(x_train, all_rows(x_train.rows()));
  std::vector<double> score(n, 0.0);
  std::vector<double> val_score(y_val.size(), 0.0);
  std::vector<double> grad(n), hess(n);

  const auto val_loss = [&]() {
    double total = 0.0;
    std::size_t lists = 0;
    for (std::size_t q = 0; q < groups_val.size(); ++q) {
      const auto b = groups_val.offsets[q];
      const auto len = groups_val.offsets[q + 1] - b;
      const auto lab = y_val.subspan(b, len);
      if (std::all_of(lab.begin(), lab.end(), [&](double v) { return v == lab.front(); })) continue;
      total += pairwise_logistic_loss(std::span<const double>(val_score).subspan(b, len), lab);
      ++lists;
    }
    return lists ? total / static_cast<double>(lists) : 0.0;
  };

  double best_loss = val_loss();
  std::size_t best_rounds = 0;
  int since = 0;
  for (int round = 1; round <= config.max_rounds; ++round) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t q = 0; q < groups_train.size(); ++q) {
      const auto b = groups_train.offsets[q];
      const auto len = groups_train.offsets[q + 1] - b;
      lambda_gradients(std::span<const double>(score).subspan(b, len), y_train.subspan(b, len),
                       std::span<double>(grad).subspan(b, len), std::span<double>(hess).subspan(b, len));
    }
    auto tree = learner.fit(grad, hess, config.tree, config.learning_rate);
    for (std::size_t i = 0; i < n; ++i) score[i] += tree.predict(x_train, static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < val_score.size(); ++i)
      val_score[i] += tree.predict(x_val, static_cast<Eigen::Index>(i));
    model.trees.push_back(std::move(tree));
    const double loss = val_loss();
    if (loss < best_loss - 1e-12) {
      best_loss = loss;
      best_rounds = model.trees.size();
      since = 0;
    } else if (++since >= config.patience) {
      break;
    }
  }
  model.trees.resize(best_rounds);
  return model;
}

// ---------------------------------------------------------------------------

double RandomForest::predict(const Eigen::MatrixXd& x, Eigen::Index row) const {
  if (trees.empty()) return 0.5;
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x, row);
  return std::clamp(s / static_cast<double>(trees.size()), 0.0, 1.0);
}

RandomForest forest_train(const Eigen::MatrixXd& x, std::span<const double> y, const ForestConfig& config) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != n || n == 0) throw Error("forest_train: label count mismatch");
  Rng rng = Rng::stream(config.seed, "forest");
  TreeLearner learner(x, all_rows(x.rows()));
  const auto d = static_cast<std::size_t>(x.cols());
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(config.feature_fraction * static_cast<double>(d))));

  RandomForest forest;
  std::vector<double> grad(n), hess(n);
  for (int t = 0; t < config.num_trees; ++t) {
    std::vector<double> weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) weight[rng.below(n)] += 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = -y[i] * weight[i];
      hess[i] = weight[i];
    }
    std::vector<std::size_t> cols(d);
    std::iota(cols.begin(), cols.end(), 0);
    rng.shuffle(cols.begin(), cols.end());
    std::vector<bool> allowed(d, false);
    for (std::size_t c = 0; c < keep; ++c) allowed[cols[c]] = true;
    forest.trees.push_back(learner.fit(grad, hess, config.tree, 1.0, allowed));
  }
  return forest;
}

}  // namespace mcre
