#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mcre/corpus.hpp"
#include "mcre/embedding.hpp"

namespace mcre {

struct FeatureSet;

/// Generative model of a consensus corpus. Correct answers sit near a
/// per-question truth centroid; wrong answers sit near decoy centroids, each
/// carrying one fixed wrong value, so models sharing a decoy agree when wrong.
struct SynthConfig {
  std::size_t num_questions = 1000;
  std::vector<double> skills{0.85, 0.4, 0.4};  // one entry per model
  std::vector<std::size_t> decoy_of{1, 0, 0};  // decoy each model falls into when wrong
  std::size_t num_decoys = 2;
  double decoy_share = 1.0;  // chance a wrong answer uses its model's own decoy
  double numeric_fraction = 0.5;
  std::vector<std::string> datasets{"synthetic"};
  std::size_t dim = 16;
  double sigma_truth = 0.15;
  double sigma_decoy = 0.6;
  std::vector<double> overconfidence{0.3, 0.0, 0.0};  // added to the reported confidence
  double confidence_spread = 0.3;
  double verifier_separation = 0.15;
  double verifier_noise = 0.15;
  double invalid_rate = 0.02;
  std::size_t sc_samples = 5;  // per reference model; 0 or 1 disables
  std::size_t sc_reference = 0;
  /// Extra samples repeat a correct canonical answer except with this
  /// probability; after a wrong canonical answer they are wrong as well.
  double sc_slip = 0.3;
  std::uint64_t seed = 0;

  std::size_t num_models() const { return skills.size(); }
  void validate() const;
};

/// Parses a JSON object or `key = value` lines (lists comma-separated),
/// overlaying the keys present onto `base`.
SynthConfig parse_synth_config(std::string_view text, SynthConfig base = {});
SynthConfig load_synth_config(const std::filesystem::path& path, SynthConfig base = {});

struct SynthCorpus {
  std::vector<QuestionRecord> questions;
  std::vector<ResponseRecord> responses;
  std::vector<ModelCatalogEntry> catalog;
  EmbeddingStore embeddings;
};

SynthCorpus generate_corpus(const SynthConfig& config);
void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);

/// Share of rows with at least one correct answer.
double oracle_upper_bound(std::span<const std::vector<std::uint8_t>> correctness);
double oracle_upper_bound(const Corpus& corpus);
double oracle_upper_bound(const FeatureSet& set, std::span<const std::size_t> records);

}  // namespace mcre
