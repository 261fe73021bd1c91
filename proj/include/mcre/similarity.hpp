#pragma once

#include <span>

#include <Eigen/Dense>

#include "mcre/embedding.hpp"

namespace mcre {

/// Symmetric M x M cosine similarity matrix with an exact unit diagonal.
struct SimilarityMatrix {
  Eigen::MatrixXd values;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  double operator()(std::size_t m, std::size_t n) const {
    return values(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  }
};

/// Requires M >= 2 and no zero-norm vector.
SimilarityMatrix build_similarity_matrix(std::span<const EmbeddingVector> embeddings);

/// Cosine distance 1 - S.
Eigen::MatrixXd cosine_distance(const SimilarityMatrix& similarity);

}  // namespace mcre
