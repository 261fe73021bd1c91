#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mcre/graph.hpp"
#include "mcre/training.hpp"

namespace mcre {

/// Softmax with max subtraction.
Eigen::VectorXd scores_to_softmax(const Eigen::VectorXd& scores);

/// Argmax with ties to the lowest index (0-based).
std::size_t select_answer(std::span<const double> probabilities);

// ---------------------------------------------------------------------------
// Logistic regression: p = sigmoid(w . phi + b)

struct LinearModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double forward(const Eigen::VectorXd& phi) const;
};

ParamLayout logreg_layout(Eigen::Index input_dim);
LinearModel logreg_unpack(const ParamLayout& layout, const Eigen::VectorXd& params);

class LogRegObjective : public Objective {
 public:
  LogRegObjective(const Eigen::MatrixXd& x, std::vector<double> y);
  std::size_t num_units() const override { return y_.size(); }
  LossSum loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units, Eigen::VectorXd* grad,
                    Rng* dropout) const override;

 private:
  const Eigen::MatrixXd& x_;
  std::vector<double> y_;
};

// ---------------------------------------------------------------------------
// MLP: two ReLU hidden layers with inverted dropout, sigmoid output

struct MlpShape {
  Eigen::Index input = 0;
  Eigen::Index hidden = 256;
  double dropout = 0.2;
};

ParamLayout mlp_layout(const MlpShape& shape);
/// Evaluation-mode probabilities, one per row of `x`.
Eigen::VectorXd mlp_forward(const MlpShape& shape, const Eigen::VectorXd& params, const Eigen::MatrixXd& x);

class MlpObjective : public Objective {
 public:
  MlpObjective(MlpShape shape, const Eigen::MatrixXd& x, std::vector<double> y);
  std::size_t num_units() const override { return y_.size(); }
  LossSum loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units, Eigen::VectorXd* grad,
                    Rng* dropout) const override;

 private:
  MlpShape shape_;
  ParamLayout layout_;
  const Eigen::MatrixXd& x_;
  std::vector<double> y_;
};

// ---------------------------------------------------------------------------
// Graph batches

/// Block-diagonal union of per-question graphs with stacked node features.
struct GraphBatch {
  Eigen::MatrixXd features;
  std::vector<double> labels;
  AnswerGraph graph;
  std::vector<std::size_t> node_offsets;  // start node of each member graph, plus total
  Eigen::SparseMatrix<double> norm_adj;
  std::vector<std::vector<std::size_t>> neighborhoods;  // N(m) plus m, ascending
};

struct GraphSample {
  AnswerGraph graph;
  Eigen::MatrixXd features;  // nodes x d
  std::vector<double> labels;
};

GraphBatch make_graph_batch(std::span<const GraphSample> samples, std::span<const std::size_t> members);
GraphBatch make_graph_batch(std::span<const GraphSample> samples);

// ---------------------------------------------------------------------------
// GCN: H' = ReLU(A_hat H W), two layers, then linear + sigmoid per node

struct GcnShape {
  Eigen::Index input = 0;
  Eigen::Index hidden = 64;
};

ParamLayout gcn_layout(const GcnShape& shape);
Eigen::VectorXd gcn_forward(const GcnShape& shape, const Eigen::VectorXd& params, const GraphBatch& batch);

// ---------------------------------------------------------------------------
// GAT: two layers of 4 heads, additive attention with LeakyReLU(0.2) over
// N(m) plus m; layer-1 heads concatenated, layer-2 heads averaged.

struct GatShape {
  Eigen::Index input = 0;
  Eigen::Index heads = 4;
  Eigen::Index hidden1 = 16;  // per head
  Eigen::Index hidden2 = 32;  // per head
  double negative_slope = 0.2;
};

ParamLayout gat_layout(const GatShape& shape);
Eigen::VectorXd gat_forward(const GatShape& shape, const Eigen::VectorXd& params, const GraphBatch& batch);

/// Attention coefficients of one layer-1 head, aligned with `batch.neighborhoods`.
std::vector<std::vector<double>> gat_attention(const GatShape& shape, const Eigen::VectorXd& params,
                                               const GraphBatch& batch, Eigen::Index layer, Eigen::Index head);

enum class GnnVariant { gcn, gat };

class GnnObjective : public Objective {
 public:
  GnnObjective(GnnVariant variant, GcnShape gcn, GatShape gat, const std::vector<GraphSample>& samples);
  std::size_t num_units() const override { return samples_.size(); }
  LossSum loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units, Eigen::VectorXd* grad,
                    Rng* dropout) const override;

 private:
  GnnVariant variant_;
  GcnShape gcn_;
  GatShape gat_;
  ParamLayout layout_;
  const std::vector<GraphSample>& samples_;
};

// ---------------------------------------------------------------------------
// Gating: w = softmax(MLP(u)); score_m = w_m * prior_m

struct GatingShape {
  Eigen::Index input = 0;
  Eigen::Index hidden = 32;
  Eigen::Index models = 0;
};

ParamLayout gating_layout(const GatingShape& shape);
Eigen::VectorXd gating_forward(const GatingShape& shape, const Eigen::VectorXd& params, const Eigen::VectorXd& u);

struct GatingDecision {
  Eigen::VectorXd probabilities;  // scores renormalized to sum 1
  std::size_t selected = 0;
};

GatingDecision gating_consensus(const Eigen::VectorXd& weights, const Eigen::VectorXd& priors);

/// Cross-entropy between w and the uniform distribution over correct models;
/// questions without a correct model contribute nothing.
class GatingObjective : public Objective {
 public:
  GatingObjective(GatingShape shape, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& correctness);
  std::size_t num_units() const override { return static_cast<std::size_t>(inputs_.rows()); }
  LossSum loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units, Eigen::VectorXd* grad,
                    Rng* dropout) const override;

 private:
  GatingShape shape_;
  ParamLayout layout_;
  const Eigen::MatrixXd& inputs_;
  const Eigen::MatrixXd& correctness_;
};

}  // namespace mcre
