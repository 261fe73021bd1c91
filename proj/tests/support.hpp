#pragma once

// Independent reference implementations used as test oracles, plus small
// fixture builders shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <iterator>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "mcre/baselines.hpp"
#include "mcre/corpus.hpp"
#include "mcre/evaluation.hpp"
#include "mcre/features.hpp"
#include "mcre/format.hpp"
#include "mcre/graph.hpp"
#include "mcre/models/neural.hpp"
#include "mcre/pipeline.hpp"
#include "mcre/rng.hpp"
#include "mcre/synthgen.hpp"
#include "mcre/training.hpp"

namespace oracle {

namespace fs = std::filesystem;

/// Fresh scratch directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mcre_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central differences of `f` at `x` for the listed coordinates.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, const std::vector<Eigen::Index>& coords,
                                          double step = 1e-5) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(coords.size()));
  Eigen::VectorXd probe = x;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto i = coords[k];
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    out[static_cast<Eigen::Index>(k)] = (up - down) / (2.0 * step);
  }
  return out;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

/// Every coordinate when the vector is small, otherwise `budget` coordinates
/// sampled so that each parameter segment contributes.
inline std::vector<Eigen::Index> gradient_coords(const mcre::ParamLayout& layout, std::size_t budget,
                                                 mcre::Rng& rng) {
  std::vector<Eigen::Index> coords;
  if (static_cast<std::size_t>(layout.size()) <= budget) {
    for (Eigen::Index i = 0; i < layout.size(); ++i) coords.push_back(i);
    return coords;
  }
  const std::size_t per = std::max<std::size_t>(1, budget / layout.segments().size());
  for (const auto& seg : layout.segments()) {
    const auto n = static_cast<std::uint64_t>(seg.rows * seg.cols);
    for (std::size_t k = 0; k < std::min<std::uint64_t>(per, n); ++k)
      coords.push_back(seg.offset + static_cast<Eigen::Index>(rng.below(n)));
  }
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  return coords;
}

/// Relative error between an objective's analytic gradient and central
/// differences of its loss, over the chosen coordinates.
inline double objective_gradient_error(const mcre::Objective& objective, const Eigen::VectorXd& params,
                                       const std::vector<Eigen::Index>& coords, double step = 1e-5) {
  std::vector<std::size_t> units(objective.num_units());
  for (std::size_t i = 0; i < units.size(); ++i) units[i] = i;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  objective.loss_grad(params, units, &grad, nullptr);
  const auto loss = [&](const Eigen::VectorXd& p) { return objective.loss_grad(p, units, nullptr, nullptr).loss; };
  const auto numeric = central_difference(loss, params, coords, step);
  Eigen::VectorXd analytic(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) analytic[static_cast<Eigen::Index>(k)] = grad[coords[k]];
  return relative_error(analytic, numeric);
}

/// False when a ReLU kink lies inside the probe interval: central differences
/// at `step` and `step / 10` then disagree far beyond truncation error.
inline bool smooth_on_probe(const mcre::Objective& objective, const Eigen::VectorXd& params,
                            const std::vector<Eigen::Index>& coords, double step = 1e-5) {
  std::vector<std::size_t> units(objective.num_units());
  for (std::size_t i = 0; i < units.size(); ++i) units[i] = i;
  const auto loss = [&](const Eigen::VectorXd& p) { return objective.loss_grad(p, units, nullptr, nullptr).loss; };
  return relative_error(central_difference(loss, params, coords, step),
                        central_difference(loss, params, coords, step / 10)) <= 1e-6;
}

// ---------------------------------------------------------------------------
// Random graphs

inline mcre::AnswerGraph random_graph(std::size_t nodes, mcre::Rng& rng, double edge_prob = 0.5) {
  mcre::AnswerGraph g;
  g.num_nodes = nodes;
  for (std::size_t m = 0; m < nodes; ++m)
    for (std::size_t n = m + 1; n < nodes; ++n)
      if (rng.bernoulli(edge_prob)) g.edges.push_back({m, n, rng.uniform(0.7, 1.0)});
  return g;
}

inline mcre::GraphSample random_graph_sample(std::size_t nodes, Eigen::Index dim, mcre::Rng& rng) {
  mcre::GraphSample s;
  s.graph = random_graph(nodes, rng);
  s.features.resize(static_cast<Eigen::Index>(nodes), dim);
  for (Eigen::Index i = 0; i < s.features.size(); ++i) s.features.data()[i] = rng.normal();
  for (std::size_t m = 0; m < nodes; ++m) s.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  if (std::find(s.labels.begin(), s.labels.end(), 1.0) == s.labels.end()) s.labels[0] = 1.0;
  return s;
}

inline Eigen::VectorXd random_params(Eigen::Index size, mcre::Rng& rng, double scale = 0.5) {
  Eigen::VectorXd p(size);
  for (Eigen::Index i = 0; i < size; ++i) p[i] = rng.uniform(-scale, scale);
  return p;
}

// ---------------------------------------------------------------------------
// Dense GCN

/// D^-1/2 (A + I) D^-1/2 assembled entry by entry from the edge list.
inline Eigen::MatrixXd dense_normalized_adjacency(const mcre::AnswerGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (const auto& e : g.edges) {
    const double w = std::max(0.0, e.weight);
    a(static_cast<Eigen::Index>(e.m), static_cast<Eigen::Index>(e.n)) += w;
    a(static_cast<Eigen::Index>(e.n), static_cast<Eigen::Index>(e.m)) += w;
  }
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(a.row(i).sum());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * a(i, j) * inv_sqrt[j];
  return out;
}

/// Two ReLU(A H W) layers then a sigmoid readout, from raw weight matrices.
inline Eigen::VectorXd dense_gcn(const Eigen::MatrixXd& a_hat, const Eigen::MatrixXd& x, const Eigen::MatrixXd& w1,
                                 const Eigen::MatrixXd& w2, const Eigen::VectorXd& w_out, double b_out) {
  const Eigen::MatrixXd h1 = (a_hat * x * w1).cwiseMax(0.0);
  const Eigen::MatrixXd h2 = (a_hat * h1 * w2).cwiseMax(0.0);
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = 1.0 / (1.0 + std::exp(-(h2.row(i).dot(w_out) + b_out)));
  return out;
}

/// Reference GAT written with explicit loops over nodes and neighbours.
/// Parameters are read in layout order: per layer and head W, a_dst, a_src,
/// then the readout weights and bias.
inline Eigen::VectorXd dense_gat(const mcre::AnswerGraph& g, const Eigen::MatrixXd& x, const Eigen::VectorXd& params,
                                 int heads, int hidden1, int hidden2, double slope) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) adj[i][i] = true;
  for (const auto& e : g.edges) adj[e.m][e.n] = adj[e.n][e.m] = true;

  Eigen::Index offset = 0;
  const auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(params.data() + offset, rows, cols);
    offset += rows * cols;
    return m;
  };
  const auto head = [&](const Eigen::MatrixXd& h, const Eigen::MatrixXd& w, const Eigen::VectorXd& a_dst,
                        const Eigen::VectorXd& a_src) {
    const Eigen::MatrixXd z = h * w;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> e(n, -std::numeric_limits<double>::infinity());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!adj[i][j]) continue;
        const double raw = z.row(static_cast<Eigen::Index>(i)).dot(a_dst) + z.row(static_cast<Eigen::Index>(j)).dot(a_src);
        e[j] = raw > 0 ? raw : slope * raw;
        top = std::max(top, e[j]);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (adj[i][j]) total += std::exp(e[j] - top);
      for (std::size_t j = 0; j < n; ++j)
        if (adj[i][j])
          out.row(static_cast<Eigen::Index>(i)) += std::exp(e[j] - top) / total * z.row(static_cast<Eigen::Index>(j));
    }
    return out;
  };

  Eigen::MatrixXd h1(x.rows(), heads * hidden1);
  for (int k = 0; k < heads; ++k) {
    const auto w = take(x.cols(), hidden1);
    const Eigen::VectorXd a_dst = take(hidden1, 1);
    const Eigen::VectorXd a_src = take(hidden1, 1);
    h1.middleCols(k * hidden1, hidden1) = head(x, w, a_dst, a_src);
  }
  h1 = h1.cwiseMax(0.0);
  Eigen::MatrixXd h2 = Eigen::MatrixXd::Zero(x.rows(), hidden2);
  for (int k = 0; k < heads; ++k) {
    const auto w = take(heads * hidden1, hidden2);
    const Eigen::VectorXd a_dst = take(hidden2, 1);
    const Eigen::VectorXd a_src = take(hidden2, 1);
    h2 += head(h1, w, a_dst, a_src) / static_cast<double>(heads);
  }
  h2 = h2.cwiseMax(0.0);
  const Eigen::VectorXd w_out = take(hidden2, 1);
  const double b = take(1, 1)(0, 0);
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = 1.0 / (1.0 + std::exp(-(h2.row(i).dot(w_out) + b)));
  return out;
}

// ---------------------------------------------------------------------------
// Gradient suite

struct GradientReport {
  std::string model;
  std::vector<double> errors;  // one per parameter point
  std::size_t redrawn = 0;      // points discarded for a kink inside the probe

  double worst() const { return errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end()); }
};

/// Glorot draw plus uniform jitter, so biases are non-zero as well.
inline Eigen::VectorXd jittered_init(const mcre::ParamLayout& layout, mcre::Rng& rng) {
  Eigen::VectorXd p;
  mcre::glorot_init(layout, p, rng);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += rng.uniform(-0.05, 0.05);
  return p;
}

/// Analytic vs central-difference gradients for every differentiable
/// meta-model at production widths. Large layouts are checked on a
/// per-segment coordinate sample of size `budget`.
inline std::vector<GradientReport> gradient_suite(std::uint64_t seed, std::size_t points = 5,
                                                  std::size_t budget = 400) {
  auto rng = mcre::Rng::stream(seed, "gradient-suite");
  const Eigen::Index d = 12;
  const std::size_t n = 16;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);

  std::vector<mcre::GraphSample> graphs;
  for (int g = 0; g < 4; ++g) graphs.push_back(random_graph_sample(2 + rng.below(5), d, rng));

  Eigen::MatrixXd gate_in(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < gate_in.size(); ++i) gate_in.data()[i] = rng.normal();
  Eigen::MatrixXd gate_z(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < gate_z.size(); ++i) gate_z.data()[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;

  const mcre::LogRegObjective logreg(x, y);
  const mcre::MlpShape mlp_shape{d, 256, 0.2};
  const mcre::MlpObjective mlp(mlp_shape, x, y);
  const mcre::GcnShape gcn_shape{d, 64};
  const mcre::GatShape gat_shape{d};
  const mcre::GnnObjective gcn(mcre::GnnVariant::gcn, gcn_shape, gat_shape, graphs);
  const mcre::GnnObjective gat(mcre::GnnVariant::gat, gcn_shape, gat_shape, graphs);
  const mcre::GatingShape gate_shape{d, 32, 3};
  const mcre::GatingObjective gating(gate_shape, gate_in, gate_z);

  const std::vector<std::tuple<std::string, const mcre::Objective*, mcre::ParamLayout>> models = {
      {"logreg", &logreg, mcre::logreg_layout(d)},
      {"mlp", &mlp, mcre::mlp_layout(mlp_shape)},
      {"gcn", &gcn, mcre::gcn_layout(gcn_shape)},
      {"gat", &gat, mcre::gat_layout(gat_shape)},
      {"gating", &gating, mcre::gating_layout(gate_shape)},
  };
  std::vector<GradientReport> out;
  for (const auto& [name, objective, layout] : models) {
    GradientReport r{name, {}};
    while (r.errors.size() < points && r.redrawn < 4 * points) {
      const auto params = jittered_init(layout, rng);
      const auto coords = gradient_coords(layout, budget, rng);
      if (!smooth_on_probe(*objective, params, coords)) {
        ++r.redrawn;
        continue;
      }
      r.errors.push_back(objective_gradient_error(*objective, params, coords));
    }
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clustering

struct Merge {
  std::size_t left;
  std::size_t right;
  double distance;
};

/// Average linkage through the Lance-Williams recurrence on a full distance
/// table indexed by cluster representative.
inline std::vector<Merge> lance_williams_average(const Eigen::MatrixXd& d, std::size_t k,
                                                 std::vector<std::size_t>* labels = nullptr) {
  const auto n = static_cast<std::size_t>(d.rows());
  std::vector<std::vector<double>> dist(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dist[i][j] = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> alive(n, true);
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) owner[i] = i;
  std::vector<Merge> merges;
  std::size_t clusters = n;
  while (clusters > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        if (dist[i][j] < best - 1e-12) {
          best = dist[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    merges.push_back({bi, bj, best});
    for (std::size_t t = 0; t < n; ++t) {
      if (!alive[t] || t == bi || t == bj) continue;
      const double v = (static_cast<double>(size[bi]) * dist[bi][t] + static_cast<double>(size[bj]) * dist[bj][t]) /
                       static_cast<double>(size[bi] + size[bj]);
      dist[bi][t] = dist[t][bi] = v;
    }
    size[bi] += size[bj];
    alive[bj] = false;
    for (auto& o : owner)
      if (o == bj) o = bi;
    --clusters;
  }
  if (labels) {
    // Renumber clusters by smallest member.
    std::vector<std::size_t> reps;
    for (std::size_t i = 0; i < n; ++i)
      if (std::find(reps.begin(), reps.end(), owner[i]) == reps.end()) reps.push_back(owner[i]);
    labels->assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      (*labels)[i] = static_cast<std::size_t>(std::find(reps.begin(), reps.end(), owner[i]) - reps.begin());
  }
  return merges;
}

/// Mean silhouette by direct enumeration; singletons score 0.
inline double silhouette(const Eigen::MatrixXd& d, const std::vector<std::size_t>& labels) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double own_sum = 0.0;
    std::size_t own_count = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) {
        own_sum += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        ++own_count;
      }
    if (own_count == 0) continue;
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (c == labels[i]) continue;
      double s = 0.0;
      std::size_t cnt = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (labels[j] == c) {
          s += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          ++cnt;
        }
      if (cnt) nearest = std::min(nearest, s / static_cast<double>(cnt));
    }
    if (!std::isfinite(nearest)) continue;
    const double a = own_sum / static_cast<double>(own_count);
    const double denom = std::max(a, nearest);
    if (denom > 0.0) total += (nearest - a) / denom;
  }
  return total / static_cast<double>(n);
}

/// K by exhaustive silhouette over every candidate cut.
inline std::size_t select_k(const Eigen::MatrixXd& similarity) {
  const auto n = static_cast<std::size_t>(similarity.rows());
  double min_off = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      min_off = std::min(min_off, similarity(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  if (min_off >= 0.95) return 1;
  const Eigen::MatrixXd d = Eigen::MatrixXd::Ones(similarity.rows(), similarity.cols()) - similarity;
  std::size_t best_k = 2;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= std::max<std::size_t>(2, n - 1); ++k) {
    std::vector<std::size_t> labels;
    lance_williams_average(d, k, &labels);
    const double s = silhouette(d, labels);
    if (s > best + 1e-12) {
      best = s;
      best_k = k;
    }
  }
  return best_k;
}

// ---------------------------------------------------------------------------
// Vote tie-breaking

/// Pearson chi-square statistic of observed counts against a uniform law.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (const auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double chi2 = 0.0;
  for (const auto c : counts) chi2 += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi2;
}

/// Upper 1% points of the chi-square law for 1..4 degrees of freedom.
inline double chi_square_critical_01(std::size_t dof) {
  static const double table[] = {6.634897, 9.210340, 11.344867, 13.276704};
  return table[dof - 1];
}

/// Winner counts of majority vote over the three-way tie (A, B, C) across
/// seeded trials, each trial with its own stream.
inline std::vector<std::size_t> three_way_tie_counts(std::uint64_t seed, std::size_t trials) {
  const std::vector<mcre::AnswerValue> votes = {'A', 'B', 'C'};
  std::vector<std::size_t> counts(3, 0);
  auto rng = mcre::Rng::stream(seed, "tie-trials");
  for (std::size_t t = 0; t < trials; ++t) {
    const auto out = mcre::majority_vote(votes, rng);
    counts[static_cast<std::size_t>(std::get<char>(out.winner) - 'A')]++;
  }
  return counts;
}

/// Plurality winners by enumeration: every value whose count is maximal.
inline std::vector<mcre::AnswerValue> plurality_set(const std::vector<mcre::AnswerValue>& votes) {
  std::vector<mcre::AnswerValue> keys;
  std::vector<std::size_t> counts;
  for (const auto& v : votes) {
    if (!mcre::is_valid(v)) continue;
    mcre::AnswerValue key = v;
    if (const auto* d = std::get_if<double>(&v)) key = *d < 0 ? -std::floor(-*d + 0.5) : std::floor(*d + 0.5);
    const auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      counts.push_back(1);
    } else {
      counts[static_cast<std::size_t>(it - keys.begin())]++;
    }
  }
  std::vector<mcre::AnswerValue> out;
  const std::size_t top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (counts[i] == top) out.push_back(keys[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Metric fixture: six truthfulqa questions, three answers each.

struct MetricFixture {
  mcre::FeatureSet set;
  std::vector<std::size_t> records;
  std::vector<Eigen::VectorXd> probabilities;
  // Hand-computed expectations.
  double accuracy = 2.0 / 6.0;
  double mrr = 3.5 / 6.0;
  double brier = 1.28 / 6.0;
  double false_plausible = 2.0 / 5.0;
  // bin -> (count, mean confidence, accuracy)
  std::vector<std::tuple<std::size_t, std::size_t, double, double>> bins{
      {4, 1, 0.4, 0.0}, {5, 1, 0.5, 0.0}, {6, 1, 0.6, 0.0}, {7, 1, 0.7, 0.0}, {9, 2, 0.9, 1.0}};
};

inline MetricFixture metric_fixture() {
  MetricFixture f;
  struct Row {
    std::vector<double> p;
    std::vector<std::uint8_t> z;
    std::string letters;  // answer letter per model
    char false_plausible;
    bool has_non_committal;
  };
  const std::vector<Row> rows = {
      {{0.9, 0.05, 0.05}, {1, 0, 0}, "ABC", 'B', true},  // pick A, correct, rr 1
      {{0.2, 0.7, 0.1}, {1, 0, 0}, "ABC", 'B', true},    // pick B (flagged), rr 1/2
      {{0.3, 0.3, 0.4}, {0, 0, 0}, "ABC", 'C', false},   // pick C, not qualifying, rr 0
      {{0.5, 0.5, 0.0}, {0, 1, 0}, "ABC", 'C', true},    // tie to A, rr 1/2
      {{0.05, 0.05, 0.9}, {0, 0, 1}, "ABC", 'A', true},  // pick C, correct, rr 1
      {{0.1, 0.6, 0.3}, {0, 0, 1}, "ABC", 'B', true},    // pick B (flagged), rr 1/2
  };
  for (std::size_t m = 0; m < 3; ++m) {
    mcre::ModelCatalogEntry e;
    e.model_id = "m" + std::to_string(m);
    e.family = "f";
    e.per_dataset_prior_accuracy["truthfulqa"] = 0.5;
    f.set.catalog.push_back(e);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    mcre::FeatureRecord r;
    r.question.question_id = "q" + std::to_string(i);
    r.question.dataset = mcre::Dataset::truthfulqa;
    r.question.task_kind = mcre::TaskKind::multiple_choice;
    for (const char c : std::string("ABCD")) {
      mcre::OptionEntry o;
      o.letter = c;
      o.text = std::string(1, c);
      o.false_plausible = c == rows[i].false_plausible;
      o.non_committal = rows[i].has_non_committal && c == 'D';
      r.question.options.push_back(o);
    }
    r.split = mcre::Split::test;
    for (const char c : rows[i].letters) r.answers.emplace_back(c);
    r.correctness = rows[i].z;
    r.question.gold_answer = "D";
    for (std::size_t m = 0; m < 3; ++m)
      if (r.correctness[m]) r.question.gold_answer = std::string(1, rows[i].letters[m]);
    r.self_conf.assign(3, std::nullopt);
    f.set.records.push_back(r);
    f.records.push_back(i);
    f.probabilities.push_back(Eigen::Map<const Eigen::VectorXd>(rows[i].p.data(), 3));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Report round-trips

struct RoundTrip {
  std::size_t checked = 0;
  std::size_t mismatched = 0;
  bool ok() const { return checked > 0 && mismatched == 0; }
};

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Writes the report CSVs, reads them back, and compares every numeric cell
/// with the in-memory summary bit for bit (NaN matches "NA").
inline RoundTrip report_round_trip(const mcre::EvalReport& report, const fs::path& dir) {
  mcre::emit_report(dir, report, {});
  RoundTrip rt;
  const auto same = [&](const std::string& cell, double want) {
    ++rt.checked;
    const double got = mcre::parse_double(cell);
    const bool equal = (std::isnan(want) && std::isnan(got)) || got == want;
    if (!equal) ++rt.mismatched;
  };

  const auto table1 = mcre::parse_csv(read_text(dir / "table1.csv"));
  for (std::size_t k = 0; k < report.methods.size(); ++k) {
    const auto& row = table1.at(k + 1);
    const auto& m = report.methods[k];
    if (row.at(0) != m.name) ++rt.mismatched;
    for (std::size_t d = 0; d < report.datasets.size(); ++d) same(row.at(d + 1), m.per_dataset.at(report.datasets[d]).accuracy);
    same(row.at(report.datasets.size() + 1), m.macro_accuracy);
  }

  const auto metrics = mcre::parse_csv(read_text(dir / "metrics.csv"));
  std::size_t line = 1;
  for (const auto& m : report.methods) {
    for (const auto d : report.datasets) {
      const auto& row = metrics.at(line++);
      const auto& dm = m.per_dataset.at(d);
      same(row.at(3), dm.accuracy);
      same(row.at(4), dm.mrr);
      same(row.at(5), dm.brier);
    }
    const auto& row = metrics.at(line++);
    same(row.at(3), m.macro_accuracy);
    same(row.at(4), m.macro_mrr);
    same(row.at(5), m.macro_brier);
  }

  const auto rel = mcre::parse_csv(read_text(dir / "reliability.csv"));
  line = 1;
  for (const auto& m : report.methods)
    for (const auto& bin : m.reliability) {
      const auto& row = rel.at(line++);
      same(row.at(2), bin.low);
      same(row.at(3), bin.high);
      same(row.at(5), bin.mean_confidence);
      same(row.at(6), bin.accuracy);
      if (std::stoul(row.at(4)) != bin.count) ++rt.mismatched;
    }

  const auto boot = mcre::parse_csv(read_text(dir / "bootstrap.csv"));
  for (std::size_t k = 0; k < report.methods.size(); ++k) {
    const auto& row = boot.at(k + 1);
    const auto& m = report.methods[k];
    if (m.bootstrap) {
      same(row.at(3), m.bootstrap->one_sided);
      same(row.at(4), m.bootstrap->two_sided);
    }
    if (m.false_plausible) same(row.at(5), *m.false_plausible);
  }
  return rt;
}

// ---------------------------------------------------------------------------
// Synthetic majority vote

/// Exact majority-vote accuracy of the generator with independent models:
/// each model is correct with its skill, invalid with `invalid_rate`, and
/// otherwise votes for its own decoy. Ties split uniformly; all-invalid loses.
inline double majority_vote_closed_form(const mcre::SynthConfig& c) {
  const std::size_t M = c.num_models();
  double total = 0.0;
  std::vector<int> state(M, 0);  // 0 correct, 1 decoy, 2 invalid
  const auto step = [&]() {
    for (std::size_t m = 0; m < M; ++m) {
      if (++state[m] < 3) return true;
      state[m] = 0;
    }
    return false;
  };
  do {
    double p = 1.0;
    std::map<long, int> votes;  // -1 for the truth, decoy index otherwise
    for (std::size_t m = 0; m < M; ++m) {
      const double valid = 1.0 - c.invalid_rate;
      if (state[m] == 0) p *= valid * c.skills[m], ++votes[-1];
      else if (state[m] == 1) p *= valid * (1.0 - c.skills[m]), ++votes[static_cast<long>(c.decoy_of[m])];
      else p *= c.invalid_rate;
    }
    if (p == 0.0 || votes.empty()) continue;
    int top = 0;
    for (const auto& [k, n] : votes) top = std::max(top, n);
    int tied = 0;
    for (const auto& [k, n] : votes) tied += n == top;
    if (votes.count(-1) && votes[-1] == top) total += p / tied;
  } while (step());
  return total;
}

/// Majority-vote accuracy measured on a loaded corpus.
inline double majority_vote_accuracy(const mcre::Corpus& corpus, std::uint64_t seed) {
  auto rng = mcre::Rng::stream(seed, "oracle.majority");
  double hits = 0.0;
  for (const auto& inst : corpus.instances) {
    std::vector<mcre::AnswerValue> votes;
    for (const auto& a : inst.answers) votes.push_back(a.parsed.final_normalized);
    const auto out = mcre::majority_vote(votes, rng);
    if (!std::holds_alternative<mcre::InvalidAnswer>(out.winner) && mcre::value_matches_gold(out.winner, inst.question))
      hits += 1.0;
  }
  return hits / static_cast<double>(corpus.instances.size());
}

// ---------------------------------------------------------------------------
// Synthetic pipeline

/// generate -> write -> load -> featurize, in a scratch directory.
inline mcre::FeatureSet synthetic_feature_set(const mcre::SynthConfig& config, const std::string& name,
                                              std::uint64_t split_seed, const mcre::SplitRatios& ratios = {}) {
  const auto dir = scratch_dir(name);
  mcre::write_synth_corpus(dir, mcre::generate_corpus(config));
  auto corpus = mcre::load_corpus(dir);
  auto set = mcre::build_feature_set(std::move(corpus), mcre::GraphConstruction{}, split_seed, ratios);
  fs::remove_all(dir);
  return set;
}

}  // namespace oracle
