#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mcre {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (already shrunk by the learning rate)
  double gain = 0.0;   // split gain, used for importance

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::MatrixXd& x, Eigen::Index row) const;
  int depth() const;
};

struct TreeParams {
  int max_depth = 6;
  double min_child_weight = 1.0;
  double lambda = 1.0;
  double min_split_gain = 0.0;
};

/// Exact greedy, level-wise second-order tree learner over a fixed design
/// matrix. Column orderings are sorted once and shared by every tree.
class TreeLearner {
 public:
  TreeLearner(const Eigen::MatrixXd& x, std::vector<std::size_t> rows);

  /// Fits one tree to per-row gradients and hessians (indexed by matrix
  /// row). Leaf values are -G/(H + lambda) scaled by `shrinkage`. Only the
  /// columns flagged in `allowed` (all when empty) are considered.
  RegressionTree fit(std::span<const double> grad, std::span<const double> hess, const TreeParams& params,
                     double shrinkage, const std::vector<bool>& allowed = {}) const;

  const std::vector<std::size_t>& rows() const { return rows_; }

 private:
  const Eigen::MatrixXd& x_;
  std::vector<std::size_t> rows_;
  std::vector<std::vector<std::size_t>> sorted_;  // per column, rows_ by ascending value
};

struct BoostedTrees {
  double base_score = 0.0;  // initial margin
  double learning_rate = 0.05;
  int max_depth = 6;
  std::vector<RegressionTree> trees;

  double margin(const Eigen::MatrixXd& x, Eigen::Index row) const;
  /// Total split gain per feature column.
  std::vector<double> gain_importance(std::size_t num_features) const;
};

struct GbdtConfig {
  TreeParams tree;
  double learning_rate = 0.05;
  int max_rounds = 500;
  int patience = 20;
};

/// Gradient boosting on the logistic loss with validation early stopping.
/// `val_curve`, when given, receives the validation loss after each round
/// (index 0 = base score only). Throws on single-class training labels.
BoostedTrees gbdt_train(const Eigen::MatrixXd& x_train, std::span<const double> y_train,
                        const Eigen::MatrixXd& x_val, std::span<const double> y_val, const GbdtConfig& config,
                        std::vector<double>* val_curve = nullptr);

double sigmoid(double x);
double logistic_loss(double margin, double label);

// ---------------------------------------------------------------------------
// Ranking

/// Rows [offsets[q], offsets[q+1]) form list q.
struct QueryGroups {
  std::vector<std::size_t> offsets{0};

  std::size_t size() const { return offsets.size() - 1; }
  void add(std::size_t list_size) { offsets.push_back(offsets.back() + list_size); }
};

/// NDCG@1 with binary gains; lists without a relevant item score 0.
double ndcg_at_1(std::span<const double> scores, std::span<const double> labels);

/// RankNet pairwise logistic gradients, each pair weighted by |delta NDCG@1|
/// of swapping it, accumulated into `grad` and `hess` for one list.
void lambda_gradients(std::span<const double> scores, std::span<const double> labels, std::span<double> grad,
                      std::span<double> hess);

/// Mean pairwise logistic loss over (relevant, irrelevant) pairs.
double pairwise_logistic_loss(std::span<const double> scores, std::span<const double> labels);

BoostedTrees rank_train(const Eigen::MatrixXd& x_train, std::span<const double> y_train,
                        const QueryGroups& groups_train, const Eigen::MatrixXd& x_val,
                        std::span<const double> y_val, const QueryGroups& groups_val, const GbdtConfig& config);

// ---------------------------------------------------------------------------
// Bagged trees

struct RandomForest {
  std::vector<RegressionTree> trees;

  double predict(const Eigen::MatrixXd& x, Eigen::Index row) const;
};

struct ForestConfig {
  int num_trees = 100;
  TreeParams tree{6, 1.0, 0.0, 0.0};
  double feature_fraction = 0.5;
  std::uint64_t seed = 0;
};

/// Bootstrap-bagged regression trees on 0/1 labels; prediction is the mean leaf.
RandomForest forest_train(const Eigen::MatrixXd& x, std::span<const double> y, const ForestConfig& config);

}  // namespace mcre
