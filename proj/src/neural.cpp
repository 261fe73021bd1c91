#include "mcre/models/neural.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mcre/error.hpp"
#include "mcre/models/trees.hpp"

namespace mcre {

Eigen::VectorXd scores_to_softmax(const Eigen::VectorXd& scores) {
  if (scores.size() == 0) return scores;
  const double top = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - top).exp();
  return e / e.sum();
}

std::size_t select_answer(std::span<const double> probabilities) {
  if (probabilities.empty()) throw Error("select_answer: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[best]) best = i;
  return best;
}

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& z) { return (z.array() > 0.0).cast<double>(); }

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

void check_input(const char* who, const Eigen::MatrixXd& x, std::size_t n) {
  if (static_cast<std::size_t>(x.rows()) != n) throw Error(std::string(who) + ": feature rows and labels differ in length");
}

// Adds `block` into the gradient segment `seg`.
void accumulate(const ParamLayout& layout, Eigen::VectorXd& grad, std::size_t seg, const Eigen::MatrixXd& block) {
  layout.view(grad, seg) += block;
}

}  // namespace

// ---------------------------------------------------------------------------

double LinearModel::forward(const Eigen::VectorXd& phi) const { return sigmoid(weights.dot(phi) + bias); }

ParamLayout logreg_layout(Eigen::Index input_dim) {
  ParamLayout layout;
  layout.add("logreg.W", input_dim, 1);
  layout.add("logreg.b", 1, 1);
  return layout;
}

LinearModel logreg_unpack(const ParamLayout& layout, const Eigen::VectorXd& params) {
  return {layout.view(params, 0).col(0), layout.view(params, 1)(0, 0)};
}

LogRegObjective::LogRegObjective(const Eigen::MatrixXd& x, std::vector<double> y) : x_(x), y_(std::move(y)) {
  check_input("logreg", x_, y_.size());
}

LossSum LogRegObjective::loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units,
                                   Eigen::VectorXd* grad, Rng*) const {
  const Eigen::Index d = x_.cols();
  const auto w = params.head(d);
  const double b = params[d];
  LossSum out;
  for (const auto u : units) {
    const auto row = x_.row(static_cast<Eigen::Index>(u));
    const double z = row.dot(w) + b;
    out.loss += logistic_loss(z, y_[u]);
    ++out.count;
    if (grad) {
      const double delta = sigmoid(z) - y_[u];
      grad->head(d) += delta * row.transpose();
      (*grad)[d] += delta;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ParamLayout mlp_layout(const MlpShape& shape) {
  ParamLayout layout;
  layout.add("mlp.l1.W", shape.input, shape.hidden);
  layout.add("mlp.l1.b", 1, shape.hidden);
  layout.add("mlp.l2.W", shape.hidden, shape.hidden);
  layout.add("mlp.l2.b", 1, shape.hidden);
  layout.add("mlp.out.W", shape.hidden, 1);
  layout.add("mlp.out.b", 1, 1);
  return layout;
}

namespace {

struct MlpPass {
  Eigen::MatrixXd z1, a1, d1, z2, a2, d2;
  Eigen::VectorXd logits;
};

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return Eigen::MatrixXd::Ones(rows, cols);
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mask;
}

MlpPass mlp_pass(const MlpShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                 const Eigen::MatrixXd& x, Rng* rng) {
  if (x.cols() != shape.input) throw Error("mlp: input width mismatch");
  MlpPass p;
  p.z1 = (x * layout.view(params, 0)).rowwise() + layout.view(params, 1).row(0);
  p.d1 = dropout_mask(p.z1.rows(), p.z1.cols(), shape.dropout, rng);
  p.a1 = relu(p.z1).cwiseProduct(p.d1);
  p.z2 = (p.a1 * layout.view(params, 2)).rowwise() + layout.view(params, 3).row(0);
  p.d2 = dropout_mask(p.z2.rows(), p.z2.cols(), shape.dropout, rng);
  p.a2 = relu(p.z2).cwiseProduct(p.d2);
  p.logits = (p.a2 * layout.view(params, 4)).col(0).array() + layout.view(params, 5)(0, 0);
  return p;
}

}  // namespace

Eigen::VectorXd mlp_forward(const MlpShape& shape, const Eigen::VectorXd& params, const Eigen::MatrixXd& x) {
  const auto layout = mlp_layout(shape);
  auto logits = mlp_pass(shape, layout, params, x, nullptr).logits;
  return logits.unaryExpr([](double z) { return sigmoid(z); });
}

MlpObjective::MlpObjective(MlpShape shape, const Eigen::MatrixXd& x, std::vector<double> y)
    : shape_(shape), layout_(mlp_layout(shape)), x_(x), y_(std::move(y)) {
  check_input("mlp", x_, y_.size());
}

LossSum MlpObjective::loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units,
                                Eigen::VectorXd* grad, Rng* dropout) const {
  const Eigen::MatrixXd xb = gather_rows(x_, units);
  const auto p = mlp_pass(shape_, layout_, params, xb, dropout);
  LossSum out;
  Eigen::VectorXd delta(p.logits.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.loss += logistic_loss(p.logits[r], y_[units[i]]);
    delta[r] = sigmoid(p.logits[r]) - y_[units[i]];
  }
  out.count = units.size();
  if (!grad) return out;

  accumulate(layout_, *grad, 4, p.a2.transpose() * delta);
  accumulate(layout_, *grad, 5, Eigen::MatrixXd::Constant(1, 1, delta.sum()));
  Eigen::MatrixXd dz2 = (delta * layout_.view(params, 4).transpose()).cwiseProduct(p.d2).cwiseProduct(relu_mask(p.z2));
  accumulate(layout_, *grad, 2, p.a1.transpose() * dz2);
  accumulate(layout_, *grad, 3, dz2.colwise().sum());
  Eigen::MatrixXd dz1 =
      (dz2 * layout_.view(params, 2).transpose()).cwiseProduct(p.d1).cwiseProduct(relu_mask(p.z1));
  accumulate(layout_, *grad, 0, xb.transpose() * dz1);
  accumulate(layout_, *grad, 1, dz1.colwise().sum());
  return out;
}

// ---------------------------------------------------------------------------

GraphBatch make_graph_batch(std::span<const GraphSample> samples, std::span<const std::size_t> members) {
  GraphBatch batch;
  if (members.empty()) throw Error("graph batch: no member graphs");
  const Eigen::Index d = samples[members.front()].features.cols();
  std::size_t total = 0;
  for (const auto i : members) {
    const auto& s = samples[i];
    if (s.features.cols() != d) throw Error("graph batch: feature width differs between graphs");
    if (static_cast<std::size_t>(s.features.rows()) != s.graph.num_nodes || s.labels.size() != s.graph.num_nodes)
      throw Error("graph batch: node count mismatch");
    total += s.graph.num_nodes;
  }
  batch.features.resize(static_cast<Eigen::Index>(total), d);
  batch.graph.num_nodes = total;
  batch.neighborhoods.assign(total, {});
  std::size_t offset = 0;
  for (const auto i : members) {
    const auto& s = samples[i];
    batch.node_offsets.push_back(offset);
    batch.features.middleRows(static_cast<Eigen::Index>(offset), s.features.rows()) = s.features;
    batch.labels.insert(batch.labels.end(), s.labels.begin(), s.labels.end());
    for (const auto& e : s.graph.edges) {
      batch.graph.edges.push_back({e.m + offset, e.n + offset, e.weight});
      batch.neighborhoods[e.m + offset].push_back(e.n + offset);
      batch.neighborhoods[e.n + offset].push_back(e.m + offset);
    }
    offset += s.graph.num_nodes;
  }
  batch.node_offsets.push_back(offset);
  for (std::size_t m = 0; m < total; ++m) {
    auto& nb = batch.neighborhoods[m];
    nb.push_back(m);
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  batch.norm_adj = normalized_adjacency_sparse(batch.graph);
  return batch;
}

GraphBatch make_graph_batch(std::span<const GraphSample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_graph_batch(samples, all);
}

// ---------------------------------------------------------------------------

ParamLayout gcn_layout(const GcnShape& shape) {
  ParamLayout layout;
  layout.add("gcn.l1.W", shape.input, shape.hidden);
  layout.add("gcn.l2.W", shape.hidden, shape.hidden);
  layout.add("gcn.out.W", shape.hidden, 1);
  layout.add("gcn.out.b", 1, 1);
  return layout;
}

namespace {

struct GcnPass {
  Eigen::MatrixXd ax, z1, h1, ah1, z2, h2;
  Eigen::VectorXd logits;
};

GcnPass gcn_pass(const GcnShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                 const GraphBatch& batch) {
  if (batch.features.cols() != shape.input) throw Error("gcn: input width mismatch");
  GcnPass p;
  p.ax = batch.norm_adj * batch.features;
  p.z1 = p.ax * layout.view(params, 0);
  p.h1 = relu(p.z1);
  p.ah1 = batch.norm_adj * p.h1;
  p.z2 = p.ah1 * layout.view(params, 1);
  p.h2 = relu(p.z2);
  p.logits = (p.h2 * layout.view(params, 2)).col(0).array() + layout.view(params, 3)(0, 0);
  return p;
}

void gcn_backward(const ParamLayout& layout, const Eigen::VectorXd& params, const GraphBatch& batch,
                  const GcnPass& p, const Eigen::VectorXd& delta, Eigen::VectorXd& grad) {
  accumulate(layout, grad, 2, p.h2.transpose() * delta);
  accumulate(layout, grad, 3, Eigen::MatrixXd::Constant(1, 1, delta.sum()));
  const Eigen::MatrixXd dz2 = (delta * layout.view(params, 2).transpose()).cwiseProduct(relu_mask(p.z2));
  accumulate(layout, grad, 1, p.ah1.transpose() * dz2);
  // A_hat is symmetric, so the backward propagation uses it unchanged.
  const Eigen::MatrixXd dh1 = batch.norm_adj * (dz2 * layout.view(params, 1).transpose());
  const Eigen::MatrixXd dz1 = dh1.cwiseProduct(relu_mask(p.z1));
  accumulate(layout, grad, 0, p.ax.transpose() * dz1);
}

}  // namespace

Eigen::VectorXd gcn_forward(const GcnShape& shape, const Eigen::VectorXd& params, const GraphBatch& batch) {
  const auto layout = gcn_layout(shape);
  return gcn_pass(shape, layout, params, batch).logits.unaryExpr([](double z) { return sigmoid(z); });
}

// ---------------------------------------------------------------------------

ParamLayout gat_layout(const GatShape& shape) {
  ParamLayout layout;
  const Eigen::Index in[2] = {shape.input, shape.heads * shape.hidden1};
  const Eigen::Index width[2] = {shape.hidden1, shape.hidden2};
  for (int l = 0; l < 2; ++l) {
    for (Eigen::Index h = 0; h < shape.heads; ++h) {
      const std::string prefix = "gat.l" + std::to_string(l + 1) + ".h" + std::to_string(h);
      layout.add(prefix + ".W", in[l], width[l]);
      layout.add(prefix + ".a_dst", width[l], 1);
      layout.add(prefix + ".a_src", width[l], 1);
    }
  }
  layout.add("gat.out.W", shape.hidden2, 1);
  layout.add("gat.out.b", 1, 1);
  return layout;
}

namespace {

struct HeadCache {
  Eigen::MatrixXd z;                        // H W
  std::vector<std::vector<double>> alpha;   // per node, aligned with neighborhoods
  std::vector<std::vector<double>> pre;     // LeakyReLU input per neighbour
  Eigen::MatrixXd out;
};

std::size_t head_segment(const GatShape& shape, int layer, Eigen::Index head) {
  return static_cast<std::size_t>((layer * shape.heads + head) * 3);
}

HeadCache head_forward(const GatShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                       const GraphBatch& batch, const Eigen::MatrixXd& h, std::size_t seg) {
  HeadCache c;
  c.z = h * layout.view(params, seg);
  const Eigen::VectorXd s_dst = c.z * layout.view(params, seg + 1).col(0);
  const Eigen::VectorXd s_src = c.z * layout.view(params, seg + 2).col(0);
  const auto n = static_cast<std::size_t>(h.rows());
  c.alpha.resize(n);
  c.pre.resize(n);
  c.out = Eigen::MatrixXd::Zero(c.z.rows(), c.z.cols());
  for (std::size_t m = 0; m < n; ++m) {
    const auto& nb = batch.neighborhoods[m];
    auto& pre = c.pre[m];
    auto& alpha = c.alpha[m];
    pre.resize(nb.size());
    alpha.resize(nb.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nb.size(); ++k) {
      pre[k] = s_dst[static_cast<Eigen::Index>(m)] + s_src[static_cast<Eigen::Index>(nb[k])];
      alpha[k] = pre[k] > 0.0 ? pre[k] : shape.negative_slope * pre[k];
      top = std::max(top, alpha[k]);
    }
    double total = 0.0;
    for (auto& a : alpha) total += (a = std::exp(a - top));
    for (std::size_t k = 0; k < nb.size(); ++k) {
      alpha[k] /= total;
      c.out.row(static_cast<Eigen::Index>(m)) += alpha[k] * c.z.row(static_cast<Eigen::Index>(nb[k]));
    }
  }
  return c;
}

// Returns the gradient with respect to the head input.
Eigen::MatrixXd head_backward(const GatShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                              const GraphBatch& batch, const Eigen::MatrixXd& h, std::size_t seg,
                              const HeadCache& c, const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) {
  const auto n = static_cast<std::size_t>(h.rows());
  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(c.z.rows(), c.z.cols());
  Eigen::VectorXd ds_dst = Eigen::VectorXd::Zero(c.z.rows());
  Eigen::VectorXd ds_src = Eigen::VectorXd::Zero(c.z.rows());
  std::vector<double> d_alpha;
  for (std::size_t m = 0; m < n; ++m) {
    const auto& nb = batch.neighborhoods[m];
    const auto& alpha = c.alpha[m];
    const auto mi = static_cast<Eigen::Index>(m);
    d_alpha.assign(nb.size(), 0.0);
    double weighted = 0.0;
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const auto ni = static_cast<Eigen::Index>(nb[k]);
      d_alpha[k] = d_out.row(mi).dot(c.z.row(ni));
      dz.row(ni) += alpha[k] * d_out.row(mi);
      weighted += alpha[k] * d_alpha[k];
    }
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double de = alpha[k] * (d_alpha[k] - weighted);
      const double du = de * (c.pre[m][k] > 0.0 ? 1.0 : shape.negative_slope);
      ds_dst[mi] += du;
      ds_src[static_cast<Eigen::Index>(nb[k])] += du;
    }
  }
  const auto a_dst = layout.view(params, seg + 1);
  const auto a_src = layout.view(params, seg + 2);
  accumulate(layout, grad, seg + 1, c.z.transpose() * ds_dst);
  accumulate(layout, grad, seg + 2, c.z.transpose() * ds_src);
  dz += ds_dst * a_dst.transpose() + ds_src * a_src.transpose();
  accumulate(layout, grad, seg, h.transpose() * dz);
  return dz * layout.view(params, seg).transpose();
}

struct GatPass {
  std::vector<HeadCache> l1, l2;
  Eigen::MatrixXd c1, h1, m2, h2;
  Eigen::VectorXd logits;
};

GatPass gat_pass(const GatShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                 const GraphBatch& batch) {
  if (batch.features.cols() != shape.input) throw Error("gat: input width mismatch");
  GatPass p;
  const Eigen::Index n = batch.features.rows();
  p.c1.resize(n, shape.heads * shape.hidden1);
  for (Eigen::Index h = 0; h < shape.heads; ++h) {
    p.l1.push_back(head_forward(shape, layout, params, batch, batch.features, head_segment(shape, 0, h)));
    p.c1.middleCols(h * shape.hidden1, shape.hidden1) = p.l1.back().out;
  }
  p.h1 = relu(p.c1);
  p.m2 = Eigen::MatrixXd::Zero(n, shape.hidden2);
  for (Eigen::Index h = 0; h < shape.heads; ++h) {
    p.l2.push_back(head_forward(shape, layout, params, batch, p.h1, head_segment(shape, 1, h)));
    p.m2 += p.l2.back().out / static_cast<double>(shape.heads);
  }
  p.h2 = relu(p.m2);
  const std::size_t out_seg = head_segment(shape, 2, 0);
  p.logits = (p.h2 * layout.view(params, out_seg)).col(0).array() + layout.view(params, out_seg + 1)(0, 0);
  return p;
}

void gat_backward(const GatShape& shape, const ParamLayout& layout, const Eigen::VectorXd& params,
                  const GraphBatch& batch, const GatPass& p, const Eigen::VectorXd& delta, Eigen::VectorXd& grad) {
  const std::size_t out_seg = head_segment(shape, 2, 0);
  accumulate(layout, grad, out_seg, p.h2.transpose() * delta);
  accumulate(layout, grad, out_seg + 1, Eigen::MatrixXd::Constant(1, 1, delta.sum()));
  const Eigen::MatrixXd dm2 = (delta * layout.view(params, out_seg).transpose()).cwiseProduct(relu_mask(p.m2)) /
                              static_cast<double>(shape.heads);
  Eigen::MatrixXd dh1 = Eigen::MatrixXd::Zero(p.h1.rows(), p.h1.cols());
  for (Eigen::Index h = 0; h < shape.heads; ++h)
    dh1 += head_backward(shape, layout, params, batch, p.h1, head_segment(shape, 1, h),
                         p.l2[static_cast<std::size_t>(h)], dm2, grad);
  const Eigen::MatrixXd dc1 = dh1.cwiseProduct(relu_mask(p.c1));
  for (Eigen::Index h = 0; h < shape.heads; ++h)
    head_backward(shape, layout, params, batch, batch.features, head_segment(shape, 0, h),
                  p.l1[static_cast<std::size_t>(h)], dc1.middleCols(h * shape.hidden1, shape.hidden1), grad);
}

}  // namespace

Eigen::VectorXd gat_forward(const GatShape& shape, const Eigen::VectorXd& params, const GraphBatch& batch) {
  const auto layout = gat_layout(shape);
  return gat_pass(shape, layout, params, batch).logits.unaryExpr([](double z) { return sigmoid(z); });
}

std::vector<std::vector<double>> gat_attention(const GatShape& shape, const Eigen::VectorXd& params,
                                               const GraphBatch& batch, Eigen::Index layer, Eigen::Index head) {
  if (layer < 1 || layer > 2 || head < 0 || head >= shape.heads) throw Error("gat_attention: no such head");
  const auto layout = gat_layout(shape);
  auto p = gat_pass(shape, layout, params, batch);
  return (layer == 1 ? p.l1 : p.l2)[static_cast<std::size_t>(head)].alpha;
}

GnnObjective::GnnObjective(GnnVariant variant, GcnShape gcn, GatShape gat, const std::vector<GraphSample>& samples)
    : variant_(variant),
      gcn_(gcn),
      gat_(gat),
      layout_(variant == GnnVariant::gcn ? gcn_layout(gcn) : gat_layout(gat)),
      samples_(samples) {}

LossSum GnnObjective::loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units,
                                Eigen::VectorXd* grad, Rng*) const {
  LossSum out;
  if (units.empty()) return out;
  const GraphBatch batch = make_graph_batch(samples_, units);
  Eigen::VectorXd delta(batch.features.rows());
  auto score = [&](const Eigen::VectorXd& logits) {
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const double y = batch.labels[static_cast<std::size_t>(i)];
      out.loss += logistic_loss(logits[i], y);
      delta[i] = sigmoid(logits[i]) - y;
    }
    out.count = static_cast<std::size_t>(logits.size());
  };
  if (variant_ == GnnVariant::gcn) {
    const auto p = gcn_pass(gcn_, layout_, params, batch);
    score(p.logits);
    if (grad) gcn_backward(layout_, params, batch, p, delta, *grad);
  } else {
    const auto p = gat_pass(gat_, layout_, params, batch);
    score(p.logits);
    if (grad) gat_backward(gat_, layout_, params, batch, p, delta, *grad);
  }
  return out;
}

// ---------------------------------------------------------------------------

ParamLayout gating_layout(const GatingShape& shape) {
  ParamLayout layout;
  layout.add("gate.l1.W", shape.input, shape.hidden);
  layout.add("gate.l1.b", 1, shape.hidden);
  layout.add("gate.out.W", shape.hidden, shape.models);
  layout.add("gate.out.b", 1, shape.models);
  return layout;
}

Eigen::VectorXd gating_forward(const GatingShape& shape, const Eigen::VectorXd& params, const Eigen::VectorXd& u) {
  if (u.size() != shape.input) throw Error("gating: input width mismatch");
  const auto layout = gating_layout(shape);
  const Eigen::RowVectorXd h = relu(u.transpose() * layout.view(params, 0) + layout.view(params, 1));
  const Eigen::RowVectorXd s = h * layout.view(params, 2) + layout.view(params, 3);
  return scores_to_softmax(s.transpose());
}

GatingDecision gating_consensus(const Eigen::VectorXd& weights, const Eigen::VectorXd& priors) {
  if (weights.size() != priors.size()) throw Error("gating: weights and priors differ in length");
  GatingDecision d;
  Eigen::VectorXd score = weights.cwiseProduct(priors);
  const double total = score.sum();
  d.probabilities = total > 0.0 ? Eigen::VectorXd(score / total) : weights;
  d.selected = select_answer(std::span<const double>(d.probabilities.data(), static_cast<std::size_t>(d.probabilities.size())));
  return d;
}

GatingObjective::GatingObjective(GatingShape shape, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& correctness)
    : shape_(shape), layout_(gating_layout(shape)), inputs_(inputs), correctness_(correctness) {
  if (inputs_.rows() != correctness_.rows() || correctness_.cols() != shape.models)
    throw Error("gating: inputs and correctness shapes disagree");
}

LossSum GatingObjective::loss_grad(const Eigen::VectorXd& params, std::span<const std::size_t> units,
                                   Eigen::VectorXd* grad, Rng*) const {
  LossSum out;
  const auto w1 = layout_.view(params, 0);
  const auto b1 = layout_.view(params, 1);
  const auto w2 = layout_.view(params, 2);
  const auto b2 = layout_.view(params, 3);
  for (const auto q : units) {
    const auto qi = static_cast<Eigen::Index>(q);
    const Eigen::RowVectorXd z = correctness_.row(qi);
    const double correct = z.sum();
    if (correct <= 0.0) continue;
    const Eigen::RowVectorXd target = z / correct;
    const Eigen::RowVectorXd pre = inputs_.row(qi) * w1 + b1;
    const Eigen::RowVectorXd h = relu(pre);
    const Eigen::RowVectorXd s = h * w2 + b2;
    const Eigen::RowVectorXd w = scores_to_softmax(s.transpose()).transpose();
    for (Eigen::Index m = 0; m < w.size(); ++m)
      if (target[m] > 0.0) out.loss -= target[m] * std::log(std::max(w[m], 1e-300));
    ++out.count;
    if (!grad) continue;
    const Eigen::RowVectorXd ds = w - target;
    accumulate(layout_, *grad, 2, h.transpose() * ds);
    accumulate(layout_, *grad, 3, ds);
    const Eigen::RowVectorXd dpre = (ds * w2.transpose()).cwiseProduct(relu_mask(pre));
    accumulate(layout_, *grad, 0, inputs_.row(qi).transpose() * dpre);
    accumulate(layout_, *grad, 1, dpre);
  }
  return out;
}

}  // namespace mcre
