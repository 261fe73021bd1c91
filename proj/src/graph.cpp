#include "mcre/graph.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <numeric>
#include <set>

#include "mcre/error.hpp"

namespace mcre {

double adjacency_weight(const Edge& e) { return std::max(e.weight, 0.0); }

std::string GraphConstruction::describe() const {
  if (kind == Kind::threshold) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, tau);
    return "threshold(tau=" + std::string(buf, ptr) + ")";
  }
  return "knn(k=" + std::to_string(k) + ")";
}

AnswerGraph build_threshold_graph(const SimilarityMatrix& similarity, double tau) {
  AnswerGraph g;
  g.num_nodes = similarity.size();
  g.construction.kind = GraphConstruction::Kind::threshold;
  g.construction.tau = tau;
  for (std::size_t m = 0; m < g.num_nodes; ++m)
    for (std::size_t n = m + 1; n < g.num_nodes; ++n)
      if (similarity(m, n) >= tau) g.edges.push_back({m, n, similarity(m, n)});
  return g;
}

AnswerGraph build_knn_graph(const SimilarityMatrix& similarity, std::size_t k) {
  const std::size_t M = similarity.size();
  if (k < 1 || k + 1 > M) throw Error("build_knn_graph: k must lie in [1, M-1]");
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<std::size_t> others;
    for (std::size_t n = 0; n < M; ++n)
      if (n != m) others.push_back(n);
    std::stable_sort(others.begin(), others.end(),
                     [&](std::size_t a, std::size_t b) { return similarity(m, a) > similarity(m, b); });
    for (std::size_t i = 0; i < k; ++i) pairs.emplace(std::min(m, others[i]), std::max(m, others[i]));
  }
  AnswerGraph g;
  g.num_nodes = M;
  g.construction.kind = GraphConstruction::Kind::knn;
  g.construction.k = k;
  for (const auto& [m, n] : pairs) g.edges.push_back({m, n, similarity(m, n)});
  return g;
}

AnswerGraph build_graph(const SimilarityMatrix& similarity, const GraphConstruction& construction) {
  if (construction.kind == GraphConstruction::Kind::knn) {
    // Small instances cannot host k neighbours; fall back to the complete graph.
    const std::size_t k = std::min(construction.k, similarity.size() - 1);
    auto g = build_knn_graph(similarity, k);
    g.construction = construction;
    return g;
  }
  return build_threshold_graph(similarity, construction.tau);
}

Eigen::MatrixXd normalized_adjacency(const AnswerGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.num_nodes);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (const auto& e : graph.edges) {
    a(static_cast<Eigen::Index>(e.m), static_cast<Eigen::Index>(e.n)) += adjacency_weight(e);
    a(static_cast<Eigen::Index>(e.n), static_cast<Eigen::Index>(e.m)) += adjacency_weight(e);
  }
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

Eigen::SparseMatrix<double> normalized_adjacency_sparse(const AnswerGraph& graph) {
  const std::size_t n = graph.num_nodes;
  std::vector<double> degree(n, 1.0);
  for (const auto& e : graph.edges) {
    degree[e.m] += adjacency_weight(e);
    degree[e.n] += adjacency_weight(e);
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n + 2 * graph.edges.size());
  for (std::size_t i = 0; i < n; ++i)
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 / degree[i]);
  for (const auto& e : graph.edges) {
    const double v = adjacency_weight(e) / std::sqrt(degree[e.m] * degree[e.n]);
    triplets.emplace_back(static_cast<int>(e.m), static_cast<int>(e.n), v);
    triplets.emplace_back(static_cast<int>(e.n), static_cast<int>(e.m), v);
  }
  Eigen::SparseMatrix<double> s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  s.setFromTriplets(triplets.begin(), triplets.end());
  return s;
}

std::string dump_edges(const AnswerGraph& graph) {
  std::string out;
  char buf[32];
  for (const auto& e : graph.edges) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, e.weight);
    out += std::to_string(e.m) + " " + std::to_string(e.n) + " " + std::string(buf, ptr) + "\n";
  }
  return out;
}

}  // namespace mcre
