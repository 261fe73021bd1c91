#include "mcre/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mcre/error.hpp"
#include "mcre/format.hpp"

namespace mcre {

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

StandardizationStats fit_standardizer(const Eigen::MatrixXd& train_rows, const std::vector<bool>& categorical) {
  const auto n = train_rows.rows();
  const auto d = train_rows.cols();
  if (n == 0) throw Error("fit_standardizer: empty training set");
  if (static_cast<std::size_t>(d) != categorical.size())
    throw Error("fit_standardizer: categorical mask has wrong width");
  StandardizationStats st;
  st.categorical = categorical;
  st.mean.assign(static_cast<std::size_t>(d), 0.0);
  st.std.assign(static_cast<std::size_t>(d), 1.0);
  st.clip_low.assign(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
  st.clip_high.assign(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto c = static_cast<std::size_t>(j);
    if (categorical[c]) continue;
    for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = train_rows(i, j);
    std::sort(column.begin(), column.end());
    st.clip_low[c] = quantile_sorted(column, 0.01);
    st.clip_high[c] = quantile_sorted(column, 0.99);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += std::clamp(train_rows(i, j), st.clip_low[c], st.clip_high[c]);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = std::clamp(train_rows(i, j), st.clip_low[c], st.clip_high[c]) - mean;
      sq += x * x;
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    st.mean[c] = mean;
    st.std[c] = sd < kConstantFeatureStd ? 1.0 : sd;
  }
  return st;
}

Eigen::MatrixXd apply_standardizer(const StandardizationStats& stats, const Eigen::MatrixXd& rows) {
  if (static_cast<std::size_t>(rows.cols()) != stats.dim())
    throw Error("apply_standardizer: dimension mismatch (" + std::to_string(rows.cols()) + " vs " +
                std::to_string(stats.dim()) + ")");
  Eigen::MatrixXd out = rows;
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const auto c = static_cast<std::size_t>(j);
    if (stats.categorical[c]) continue;
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
      out(i, j) = (std::clamp(rows(i, j), stats.clip_low[c], stats.clip_high[c]) - stats.mean[c]) / stats.std[c];
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t ParamLayout::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  segments_.push_back({std::move(name), size_, rows, cols});
  size_ += rows * cols;
  return segments_.size() - 1;
}

std::string ParamLayout::describe(Eigen::Index flat_index) const {
  for (const auto& s : segments_) {
    if (flat_index >= s.offset && flat_index < s.offset + s.rows * s.cols) {
      const auto local = flat_index - s.offset;
      if (s.cols == 1) return s.name + "[" + std::to_string(local) + "]";
      return s.name + "[" + std::to_string(local % s.rows) + "," + std::to_string(local / s.rows) + "]";
    }
  }
  return "param[" + std::to_string(flat_index) + "]";
}

Eigen::Map<Eigen::MatrixXd> ParamLayout::view(Eigen::VectorXd& params, std::size_t seg) const {
  const auto& s = segments_.at(seg);
  return {params.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParamLayout::view(const Eigen::VectorXd& params, std::size_t seg) const {
  const auto& s = segments_.at(seg);
  return {params.data() + s.offset, s.rows, s.cols};
}

void glorot_init(const ParamLayout& layout, Eigen::VectorXd& params, Rng& rng) {
  params.setZero(layout.size());
  for (const auto& s : layout.segments()) {
    const bool is_bias = s.name.size() >= 2 && s.name.compare(s.name.size() - 2, 2, ".b") == 0;
    if (is_bias) continue;
    const double fan_in = static_cast<double>(s.rows);
    const double fan_out = static_cast<double>(s.cols);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < s.rows * s.cols; ++i) params[s.offset + i] = rng.uniform(-limit, limit);
  }
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state, const TrainConfig& config,
               const ParamLayout* layout) {
  if (grads.size() != params.size()) throw Error("adam_step: gradient/parameter shape mismatch");
  for (Eigen::Index i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      const std::string name = layout ? layout->describe(i) : "param[" + std::to_string(i) + "]";
      throw Error("adam_step: non-finite gradient " + format_double(grads[i]) + " for " + name);
    }
  }
  if (state.m.size() != params.size()) {
    state.m.setZero(params.size());
    state.v.setZero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
}

bool EarlyStopping::update(int epoch, double val_loss, const Eigen::VectorXd& params) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    best_params_ = params;
    since_improvement_ = 0;
    return false;
  }
  ++since_improvement_;
  return since_improvement_ >= patience_;
}

LossSum Objective::evaluate(const Eigen::VectorXd& params) const {
  std::vector<std::size_t> all(num_units());
  std::iota(all.begin(), all.end(), 0);
  return loss_grad(params, all, nullptr, nullptr);
}

TrainHistory train_loop(Eigen::VectorXd& params, const Objective& train, const Objective& val,
                        const TrainConfig& config, const ParamLayout& layout) {
  if (config.learning_rate <= 0 || config.batch_size == 0 || config.max_epochs <= 0)
    throw Error("train_loop: learning rate, batch size and epochs must be positive");
  Rng shuffle = Rng::stream(config.seed, "shuffle");
  Rng dropout = Rng::stream(config.seed, "dropout");
  AdamState adam;
  EarlyStopping stopper(config.patience);
  TrainHistory history;

  std::vector<std::size_t> order(train.num_units());
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd grad(params.size());

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grad.setZero();
      const auto batch = std::span<const std::size_t>(order).subspan(start, end - start);
      const auto ls = train.loss_grad(params, batch, &grad, &dropout);
      if (ls.count == 0) continue;
      epoch_loss += ls.loss;
      epoch_count += ls.count;
      grad /= static_cast<double>(ls.count);
      adam_step(params, grad, adam, config, &layout);
    }
    const auto v = val.evaluate(params);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_count ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    rec.val_loss = v.count ? v.loss / static_cast<double>(v.count) : rec.train_loss;
    history.epochs.push_back(rec);
    if (stopper.update(epoch, rec.val_loss, params)) break;
  }
  if (stopper.best_params().size() == params.size()) params = stopper.best_params();
  history.best_epoch = stopper.best_epoch();
  return history;
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : history.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
  return out.str();
}

}  // namespace mcre
