#include "mcre/similarity.hpp"

#include "mcre/error.hpp"

namespace mcre {

SimilarityMatrix build_similarity_matrix(std::span<const EmbeddingVector> embeddings) {
  const auto M = static_cast<Eigen::Index>(embeddings.size());
  if (M < 2) throw Error("build_similarity_matrix: need at least two answers");
  SimilarityMatrix s{Eigen::MatrixXd::Identity(M, M)};
  for (Eigen::Index m = 0; m < M; ++m) {
    for (Eigen::Index n = m + 1; n < M; ++n) {
      const double c = cosine_similarity(embeddings[static_cast<std::size_t>(m)], embeddings[static_cast<std::size_t>(n)]);
      s.values(m, n) = c;
      s.values(n, m) = c;
    }
  }
  return s;
}

Eigen::MatrixXd cosine_distance(const SimilarityMatrix& similarity) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(similarity.values.rows(), similarity.values.cols()) - similarity.values;
  d.diagonal().setZero();
  return d;
}

}  // namespace mcre
