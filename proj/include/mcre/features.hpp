#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcre/corpus.hpp"
#include "mcre/similarity.hpp"

namespace mcre {

// ---------------------------------------------------------------------------
// Semantic agreement

struct SemanticStats {
  std::vector<double> mean_sim;
  std::vector<double> max_sim;
  std::vector<double> min_sim;
  std::vector<double> centroid_sim;
  /// 1-based rank of mean_sim, descending, ties by model index.
  std::vector<std::size_t> agreement_rank;
};

SemanticStats semantic_agreement_stats(const SimilarityMatrix& similarity,
                                       std::span<const EmbeddingVector> embeddings);

// ---------------------------------------------------------------------------
// Clustering

struct MergeStep {
  std::size_t left;   // smallest member index of the first cluster
  std::size_t right;  // smallest member index of the second cluster
  double distance;
  friend bool operator==(const MergeStep&, const MergeStep&) = default;
};

struct ClusterAssignment {
  std::size_t num_clusters = 1;
  /// Cluster ids are numbered by their smallest member, so answer 0 is in cluster 0.
  std::vector<std::size_t> cluster_id;
  std::vector<std::size_t> cluster_sizes;
  std::vector<std::uint8_t> major_flag;
  double major_ratio = 1.0;
};

/// Bottom-up average-linkage clustering on cosine distance, stopped at K
/// clusters. Ties in linkage go to the lexicographically smallest pair of
/// cluster representatives. `trace`, when given, receives every merge.
ClusterAssignment agglomerative_cluster(const Eigen::MatrixXd& distance, std::size_t k,
                                        std::vector<MergeStep>* trace = nullptr);
ClusterAssignment agglomerative_cluster(std::span<const EmbeddingVector> embeddings, std::size_t k);

/// Mean silhouette with the convention s(i) = 0 for singleton clusters.
double mean_silhouette(const Eigen::MatrixXd& distance, std::span<const std::size_t> labels);

inline constexpr double kAllAgreeSimilarity = 0.95;

/// K = 1 when every off-diagonal similarity is >= 0.95; otherwise the K in
/// {2, ..., max(2, M-1)} with the highest mean silhouette, ties to smaller K.
std::size_t select_k_silhouette(const SimilarityMatrix& similarity);
std::size_t select_k_silhouette(std::span<const EmbeddingVector> embeddings);

/// Fills sizes, major flags and the major ratio from cluster ids.
void finalize_cluster_features(ClusterAssignment& assignment);

// ---------------------------------------------------------------------------
// Lexical and structural

/// Whitespace tokens, lowercased, with surrounding punctuation stripped.
std::vector<std::string> tokenize(std::string_view text);
bool is_numeric_token(std::string_view token);

struct LexicalFeatures {
  double token_count_reasoning = 0;
  double token_count_final = 0;
  double char_len_reasoning = 0;
  double char_len_final = 0;
  double numeric_token_count = 0;
  double numeric_token_ratio = 0;
  double discourse_marker_count = 0;
};

LexicalFeatures lexical_features(const ParsedAnswer& parsed);

double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b);
/// ROUGE-L F1 (beta = 1) over token sequences.
double rouge_l_f1(std::span<const std::string> a, std::span<const std::string> b);

struct PairwiseLexical {
  std::vector<double> mean_jaccard;
  std::vector<double> max_jaccard;
  std::vector<double> mean_rouge_l;
  std::vector<double> max_rouge_l;
};

PairwiseLexical pairwise_lexical_aggregates(std::span<const ParsedAnswer> answers);

// ---------------------------------------------------------------------------
// Reasoning quality

struct ReasoningScores {
  double coherence = 0;
  double consistency = 0;
  double completeness = 0;
  std::size_t step_count = 0;
  bool has_verification_phrase = false;
  bool present = false;
};

ReasoningScores reasoning_features(const ResponseRecord& record, const ParsedAnswer& parsed);

// ---------------------------------------------------------------------------
// Confidence and priors

struct ConfidencePriorFeatures {
  double self_conf = 0;
  bool conf_present = false;
  double mean_logprob = 0;
  bool logprob_present = false;
  std::vector<double> model_one_hot;
  double prior_accuracy = 0;
  double log_param_count = 0;
  std::vector<double> family_one_hot;
};

/// Families in first-appearance order of the catalog.
std::vector<std::string> catalog_families(std::span<const ModelCatalogEntry> catalog);

ConfidencePriorFeatures confidence_prior_features(const ResponseRecord& record,
                                                  std::span<const ModelCatalogEntry> catalog, Dataset dataset);

/// Per-dataset accuracy of each model over the given (training) instances.
void fit_prior_accuracy(std::vector<ModelCatalogEntry>& catalog, std::span<const ConsensusInstance> instances);

// ---------------------------------------------------------------------------
// Manifest and assembly

enum class FeatureBlock { sem, lex, logic, conf, prior };
std::string to_string(FeatureBlock block);
FeatureBlock parse_feature_block(std::string_view name);

struct FeatureSpec {
  std::string name;
  FeatureBlock block;
  bool categorical = false;
};

struct FeatureManifest {
  int version = 1;
  std::vector<FeatureSpec> features;
  std::vector<std::string> discourse_markers;
  std::vector<std::string> step_markers;
  std::vector<std::string> verification_phrases;
  std::string hash;

  std::size_t dim() const { return features.size(); }
  std::size_t block_dim(FeatureBlock block) const;
  std::vector<std::size_t> columns_of(std::span<const FeatureBlock> blocks) const;
  std::vector<bool> categorical_mask() const;
  std::size_t index_of(std::string_view name) const;
};

inline constexpr int kFeatureManifestVersion = 1;

FeatureManifest build_feature_manifest(std::span<const ModelCatalogEntry> catalog);
/// Hash over names, blocks, categorical flags and keyword lists.
std::string compute_manifest_hash(const FeatureManifest& manifest);

struct BlockValues {
  FeatureBlock block;
  std::vector<double> values;
};

/// Concatenates blocks in the fixed order sem | lex | logic | conf | prior.
/// Throws when a block is out of order, missing, or of the wrong width.
std::vector<double> assemble_feature_vector(const FeatureManifest& manifest, std::span<const BlockValues> blocks);

struct InstanceFeatures {
  Eigen::MatrixXd rows;  // M x d
  SimilarityMatrix similarity;
  ClusterAssignment clusters;
};

/// Computes phi for every answer of one instance. Requires embeddings and a
/// fitted prior table in `catalog`.
InstanceFeatures extract_instance_features(const ConsensusInstance& instance, const FeatureManifest& manifest,
                                           std::span<const ModelCatalogEntry> catalog);

}  // namespace mcre
