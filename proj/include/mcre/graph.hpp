#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mcre/similarity.hpp"

namespace mcre {

struct GraphConstruction {
  enum class Kind { threshold, knn };
  Kind kind = Kind::threshold;
  double tau = 0.7;
  std::size_t k = 2;

  std::string describe() const;
};

struct Edge {
  std::size_t m;  // m < n
  std::size_t n;
  double weight;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Undirected weighted graph over the answers of one question. Edges are
/// stored once with m < n, sorted, and never include self-loops.
struct AnswerGraph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  GraphConstruction construction;
};

AnswerGraph build_threshold_graph(const SimilarityMatrix& similarity, double tau);

/// Union-symmetrized k-nearest-neighbour graph; neighbour ties go to the
/// lower index. Requires 1 <= k <= M - 1.
AnswerGraph build_knn_graph(const SimilarityMatrix& similarity, std::size_t k);

AnswerGraph build_graph(const SimilarityMatrix& similarity, const GraphConstruction& construction);

/// Weight an edge contributes to the adjacency. Negative similarities
/// (possible under kNN or tau < 0) are clamped to 0 so degrees stay >= 1.
double adjacency_weight(const Edge& e);

/// D^-1/2 (A + I) D^-1/2 with A the weighted adjacency.
Eigen::MatrixXd normalized_adjacency(const AnswerGraph& graph);
Eigen::SparseMatrix<double> normalized_adjacency_sparse(const AnswerGraph& graph);

/// `m n w` lines, one per edge.
std::string dump_edges(const AnswerGraph& graph);

}  // namespace mcre
