#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcre/rng.hpp"

namespace mcre {

// ---------------------------------------------------------------------------
// Standardization

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> clip_low;
  std::vector<double> clip_high;
  std::vector<bool> categorical;

  std::size_t dim() const { return mean.size(); }
};

inline constexpr double kConstantFeatureStd = 1e-12;

/// Linear-interpolation quantile of already sorted values.
double quantile_sorted(std::span<const double> sorted, double q);

/// Fits clip bounds (1st/99th percentile) and mean/std of the clipped values
/// on training rows only. Categorical columns are passed through untouched.
StandardizationStats fit_standardizer(const Eigen::MatrixXd& train_rows, const std::vector<bool>& categorical);

/// Clips with the training bounds, then scales continuous columns.
Eigen::MatrixXd apply_standardizer(const StandardizationStats& stats, const Eigen::MatrixXd& rows);

// ---------------------------------------------------------------------------
// Parameters and optimization

/// Named segments of a flat parameter vector (matrices are column-major).
class ParamLayout {
 public:
  struct Segment {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols = 1);
  Eigen::Index size() const { return size_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  /// e.g. "gat.l1.h0.W[3,2]".
  std::string describe(Eigen::Index flat_index) const;

  Eigen::Map<Eigen::MatrixXd> view(Eigen::VectorXd& params, std::size_t seg) const;
  Eigen::Map<const Eigen::MatrixXd> view(const Eigen::VectorXd& params, std::size_t seg) const;

 private:
  std::vector<Segment> segments_;
  Eigen::Index size_ = 0;
};

/// Uniform Glorot-style init for matrix segments; vectors named `*.b` start at zero.
void glorot_init(const ParamLayout& layout, Eigen::VectorXd& params, Rng& rng);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

/// One bias-corrected Adam update. A non-finite gradient aborts with the
/// offending parameter's name.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const TrainConfig& config,
               const ParamLayout* layout = nullptr);

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  /// Records an epoch's validation loss; returns true when training should stop.
  bool update(int epoch, double val_loss, const Eigen::VectorXd& params);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  const Eigen::VectorXd& best_params() const { return best_params_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int since_improvement_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
};

struct LossSum {
  double loss = 0;       // summed cross-entropy
  std::size_t count = 0; // number of scored items (answers / nodes)
};

/// A differentiable objective over indexed training units (answers for
/// per-answer models, questions for graph and gating models).
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t num_units() const = 0;
  /// Sum of losses over `units`; adds the gradient of that sum into `grad`
  /// when non-null. `dropout` is null in evaluation mode.
  virtual LossSum loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units,
                            Eigen::VectorXd* grad, Rng* dropout) const = 0;

  LossSum evaluate(const Eigen::VectorXd& params) const;
};

/// Seeded mini-batch Adam with early stopping on validation loss; `params`
/// receives the best-epoch snapshot.
TrainHistory train_loop(Eigen::VectorXd& params, const Objective& train, const Objective& val,
                        const TrainConfig& config, const ParamLayout& layout);

std::string history_csv(const TrainHistory& history);

}  // namespace mcre
