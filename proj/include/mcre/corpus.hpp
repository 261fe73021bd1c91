#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcre/embedding.hpp"
#include "mcre/parsing.hpp"

namespace mcre {

enum class Dataset { gsm8k, arc, hellaswag, truthfulqa, synthetic };
enum class Split { train, val, test };

std::string to_string(Dataset d);
std::string to_string(TaskKind k);
std::string to_string(Split s);
Dataset parse_dataset(std::string_view s);
TaskKind parse_task_kind(std::string_view s);
Split parse_split(std::string_view s);

struct OptionEntry {
  char letter = 'A';
  std::string text;
  bool false_plausible = false;
  bool non_committal = false;
};

struct QuestionRecord {
  std::string question_id;
  Dataset dataset = Dataset::synthetic;
  TaskKind task_kind = TaskKind::numeric;
  std::string question_text;
  std::string gold_answer;
  std::vector<OptionEntry> options;

  const OptionEntry* option(char letter) const;
};

struct ResponseRecord {
  std::string question_id;
  std::string model_id;
  int sample_index = 0;
  std::string raw_text;
  std::optional<std::string> self_confidence_raw;
  std::optional<double> mean_logprob;
  std::optional<std::array<double, 3>> verifier_scores;
};

struct ModelCatalogEntry {
  std::string model_id;
  std::string family;
  double log_param_count = 1.0;
  std::map<std::string, double> per_dataset_prior_accuracy;
};

struct InstanceAnswer {
  ResponseRecord response;
  ParsedAnswer parsed;
  std::optional<EmbeddingVector> embedding;
};

/// One question with its M canonical answers, in catalog order.
struct ConsensusInstance {
  QuestionRecord question;
  std::vector<InstanceAnswer> answers;
  std::vector<std::uint8_t> correctness;
  Split split = Split::train;
  /// Extra samples (sample_index > 0 plus the canonical one) per model index,
  /// consumed only by the self-consistency baseline.
  std::map<std::size_t, std::vector<ParsedAnswer>> samples;
  std::optional<EmbeddingVector> question_embedding;
};

struct CorpusManifest {
  std::size_t num_questions = 0;
  std::size_t num_models = 0;
  std::vector<ModelCatalogEntry> catalog;
  std::map<std::string, std::size_t> dataset_counts;
  int schema_version = 1;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<ConsensusInstance> instances;
  bool has_embeddings = false;
};

inline constexpr int kCorpusSchemaVersion = 1;

/// Loads `questions.jsonl`, `responses.jsonl`, `models.json` and, when
/// present, `embeddings.bin`. Every record is validated; errors name the
/// offending file and line.
Corpus load_corpus(const std::filesystem::path& dir);

/// Writes the JSONL corpus layout (and embeddings when given).
void write_corpus(const std::filesystem::path& dir, std::span<const QuestionRecord> questions,
                  std::span<const ResponseRecord> responses, std::span<const ModelCatalogEntry> catalog,
                  const EmbeddingStore* embeddings);

/// Numeric answers match within max(1e-9, 1e-6 |gold|); letters must be equal.
/// Invalid parses are never correct. Throws when a numeric gold is unparseable.
bool label_correctness(const ParsedAnswer& parsed, const QuestionRecord& question);
bool value_matches_gold(const AnswerValue& value, const QuestionRecord& question);

struct SplitRatios {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

struct SplitKey {
  std::string question_id;
  Dataset dataset = Dataset::synthetic;
};

/// Grouped, per-dataset stratified assignment. The result depends only on the
/// set of (question_id, dataset) keys and the seed, not on input order.
std::vector<Split> assign_splits(std::span<const SplitKey> keys, const SplitRatios& ratios, std::uint64_t seed);
void assign_splits(std::vector<ConsensusInstance>& instances, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace mcre
