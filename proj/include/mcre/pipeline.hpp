#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>
#include <Eigen/Dense>

#include "mcre/corpus.hpp"
#include "mcre/features.hpp"
#include "mcre/graph.hpp"
#include "mcre/models/neural.hpp"
#include "mcre/models/trees.hpp"
#include "mcre/training.hpp"

namespace mcre {

/// Caps worker threads used by featurization and evaluation (0 = hardware).
void set_thread_limit(unsigned threads);
unsigned thread_limit();

// ---------------------------------------------------------------------------
// Feature sets

/// Everything downstream stages need about one question.
struct FeatureRecord {
  QuestionRecord question;
  Split split = Split::train;
  std::vector<AnswerValue> answers;
  std::vector<std::uint8_t> correctness;
  Eigen::MatrixXd rows;  // M x d, unstandardized
  AnswerGraph graph;
  std::vector<std::optional<double>> self_conf;
  std::map<std::size_t, std::vector<AnswerValue>> samples;
  std::optional<std::vector<double>> question_embedding;
};

struct FeatureSet {
  FeatureManifest manifest;
  GraphConstruction graph;
  std::vector<ModelCatalogEntry> catalog;  // priors fitted on the train split
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  std::vector<FeatureRecord> records;

  std::size_t num_models() const { return catalog.size(); }
  std::vector<std::size_t> indices(Split split) const;
  /// Training-split accuracy of model m on dataset d.
  double prior(std::size_t m, Dataset d) const;
};

inline constexpr int kFeatureSetVersion = 1;

/// Assigns splits, fits priors on train, and extracts features and graphs.
/// Requires embeddings for every answer.
FeatureSet build_feature_set(Corpus corpus, const GraphConstruction& graph, std::uint64_t split_seed,
                             const SplitRatios& ratios = {});

nlohmann::json feature_set_to_json(const FeatureSet& set);
FeatureSet feature_set_from_json(const nlohmann::json& j);
void save_feature_set(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet load_feature_set(const std::filesystem::path& path);

nlohmann::json answer_to_json(const AnswerValue& value);
AnswerValue answer_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Meta-models

enum class ModelKind { logreg, gbdt, mlp, rank, gcn, gat, gating, rf };

std::string to_string(ModelKind kind);
/// Throws UsageError listing the valid kinds.
ModelKind parse_model_kind(std::string_view name);
const std::vector<std::string>& model_kind_names();

struct ModelOptions {
  TrainConfig train;
  GbdtConfig gbdt;
  ForestConfig forest;
  std::vector<FeatureBlock> blocks{FeatureBlock::sem, FeatureBlock::lex, FeatureBlock::logic, FeatureBlock::conf,
                                   FeatureBlock::prior};
};

struct TrainedModel {
  ModelKind kind = ModelKind::logreg;
  std::string manifest_hash;
  std::vector<FeatureBlock> blocks;
  std::vector<std::size_t> columns;  // manifest columns fed to the model
  StandardizationStats standardizer;
  std::uint64_t seed = 0;

  Eigen::VectorXd params;  // differentiable models
  MlpShape mlp;
  GcnShape gcn;
  GatShape gat;
  GatingShape gating;
  std::vector<std::string> gating_datasets;  // one-hot order when no question embedding
  bool gating_uses_embedding = false;
  std::map<std::string, std::vector<double>> gating_priors;  // dataset -> per-model prior

  BoostedTrees trees;   // gbdt, rank
  RandomForest forest;  // rf

  TrainHistory history;
  std::vector<double> boosting_curve;
};

inline constexpr int kModelFormatVersion = 1;

TrainedModel train_model(const FeatureSet& set, ModelKind kind, const ModelOptions& options);

/// Correctness probabilities for each answer of the given records.
std::vector<Eigen::VectorXd> predict(const TrainedModel& model, const FeatureSet& set,
                                     std::span<const std::size_t> records);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
/// Refuses a model whose manifest hash differs from `expected_hash`.
TrainedModel load_model(const std::filesystem::path& path, const std::string& expected_hash);

/// (feature name, summed split gain), descending; ties by column order.
std::vector<std::pair<std::string, double>> feature_importance(const TrainedModel& model,
                                                               const FeatureManifest& manifest);

}  // namespace mcre
