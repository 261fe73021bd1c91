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
#include "mcre/pipeline.hpp"

namespace mcre {

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of ones. Throws on an empty test set.
double accuracy(std::span<const std::uint8_t> correct);

/// Answer indices by descending probability, ties to the lower index.
std::vector<std::size_t> rank_by_probability(const Eigen::VectorXd& probabilities);

/// 1/rank of the first correct answer in `ranking`, 0 when none is correct.
double reciprocal_rank(std::span<const std::size_t> ranking, std::span<const std::uint8_t> correctness);

double mrr(std::span<const std::vector<std::size_t>> rankings, std::span<const std::vector<std::uint8_t>> correctness);

/// Mean squared gap between the selected answer's probability and its correctness.
double brier(std::span<const double> probabilities, std::span<const std::uint8_t> correct);

struct ReliabilityBin {
  double low = 0;
  double high = 0;
  std::size_t count = 0;
  double mean_confidence = 0;  // NaN when empty
  double accuracy = 0;         // NaN when empty
};

/// Equal-width bins; the last bin is closed so p = 1 lands in it.
std::vector<ReliabilityBin> reliability_diagram(std::span<const double> probabilities,
                                                std::span<const std::uint8_t> correct, std::size_t bins = 10);

/// TruthfulQA questions with at least one false-but-plausible and one non-committal option.
bool qualifies_for_false_plausible(const QuestionRecord& question);

/// Share of qualifying questions whose selected letter is flagged false-but-plausible.
double false_plausible_rate(std::span<const QuestionRecord> questions, std::span<const AnswerValue> chosen);

struct BootstrapResult {
  double one_sided = 0;  // P(acc A <= acc B), ties counted half
  double two_sided = 0;
};

BootstrapResult paired_bootstrap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                                 std::size_t resamples, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Per-method outcomes on the evaluated records

struct InstanceOutcome {
  std::size_t record = 0;
  AnswerValue chosen;
  bool abstained = false;
  bool correct = false;
  double probability = 0;            // confidence attached to the selection
  std::vector<std::size_t> ranking;  // answer indices, best first
};

struct MethodOutcomes {
  std::string name;
  std::vector<InstanceOutcome> outcomes;
};

/// Argmax selection from per-answer probabilities.
MethodOutcomes outcomes_from_probabilities(std::string name, const FeatureSet& set,
                                           std::span<const std::size_t> records,
                                           const std::vector<Eigen::VectorXd>& probabilities);

struct BaselineOptions {
  std::uint64_t seed = 0;
  std::size_t self_consistency_reference = 0;
};

inline constexpr const char* kRandomName = "Random model";
inline constexpr const char* kMajorityName = "Majority vote";
inline constexpr const char* kSelfConsistencyName = "Self-consistency";
inline constexpr const char* kBestSingleName = "Best single model";

/// Random, majority vote, self-consistency (when samples exist) and best single.
std::vector<MethodOutcomes> run_baselines(const FeatureSet& set, std::span<const std::size_t> records,
                                          const BaselineOptions& options);

/// Table-1 row label for a meta-model, e.g. "Consensus (GAT)".
std::string method_label(ModelKind kind);

// ---------------------------------------------------------------------------
// Reports

struct DatasetMetrics {
  std::size_t n = 0;
  double accuracy = 0;
  double mrr = 0;
  double brier = 0;
  std::size_t abstentions = 0;
};

struct MethodSummary {
  std::string name;
  std::map<Dataset, DatasetMetrics> per_dataset;
  double macro_accuracy = 0;
  double macro_mrr = 0;
  double macro_brier = 0;
  std::vector<ReliabilityBin> reliability;
  std::optional<double> false_plausible;
  std::optional<BootstrapResult> bootstrap;
};

struct EvalConfig {
  std::string reference = kBestSingleName;
  std::size_t resamples = 10000;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::vector<Dataset> datasets;
  std::vector<MethodSummary> methods;
  EvalConfig config;
  std::string manifest_hash;
  std::size_t num_test = 0;
};

EvalReport summarize(const FeatureSet& set, std::span<const MethodOutcomes> methods, const EvalConfig& config);

std::string table1_csv(const EvalReport& report);
std::string metrics_csv(const EvalReport& report);
std::string reliability_csv(const EvalReport& report);
std::string bootstrap_csv(const EvalReport& report);
std::string report_markdown(const EvalReport& report);

/// epoch,train_loss,val_loss
std::string history_rows_csv(const std::vector<std::pair<std::string, TrainHistory>>& histories);

/// Writes report.md, table1.csv, metrics.csv, reliability.csv, bootstrap.csv and history.csv.
void emit_report(const std::filesystem::path& dir, const EvalReport& report,
                 const std::vector<std::pair<std::string, TrainHistory>>& histories);

/// Minimal CSV reader for the files written here (no quoting).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string label;
  std::vector<FeatureBlock> blocks;
};

/// Full, then one row per removed group, then semantic + clustering only.
std::vector<AblationRow> default_ablation_rows();

/// {"rows": [{"label": ..., "blocks": [...]} | {"label": ..., "drop": [...]}]}
std::vector<AblationRow> parse_ablation_spec(const nlohmann::json& spec);

struct AblationResult {
  std::string label;
  std::vector<FeatureBlock> blocks;
  double macro_accuracy = 0;
  double delta = 0;  // vs the first row
};

/// Retrains `kind` per row with identical options; accuracy on the test split.
std::vector<AblationResult> run_ablation(const FeatureSet& set, ModelKind kind, const ModelOptions& options,
                                         std::span<const AblationRow> rows);

double macro_accuracy(const FeatureSet& set, const MethodOutcomes& method);

std::string table2_csv(std::span<const AblationResult> results);
std::string table2_markdown(std::span<const AblationResult> results);

}  // namespace mcre
