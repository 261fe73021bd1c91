#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mcre {

/// Dense embedding of one answer (or question). Storage is 32-bit on disk,
/// all similarity arithmetic runs in doubles.
struct EmbeddingVector {
  std::vector<double> values;
  std::string source_tag;

  std::size_t dim() const { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double norm(const EmbeddingVector& v);

/// u.v / (|u| |v|). Throws on zero-norm input or a dimension mismatch.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

/// `a` followed by `b`; an empty side acts as identity.
EmbeddingVector concat_embeddings(const EmbeddingVector& a, const EmbeddingVector& b);

/// Coordinate-wise mean. Throws on an empty list or mixed dimensions.
EmbeddingVector centroid(std::span<const EmbeddingVector> vectors);

using EmbeddingKey = std::pair<std::string, std::string>;  // (question_id, model_id)

/// Model id under which question-text embeddings are stored.
inline constexpr std::string_view kQuestionEmbeddingModel = "__question__";

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

  /// Inserts or replaces; throws on a dimension mismatch or non-finite entry.
  void put(const std::string& question_id, const std::string& model_id, EmbeddingVector vec);
  const EmbeddingVector* find(const std::string& question_id, const std::string& model_id) const;
  bool contains(const std::string& question_id, const std::string& model_id) const;

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return rows_.size(); }
  /// Rows in insertion order; this is also the on-disk row order.
  const std::vector<std::pair<EmbeddingKey, EmbeddingVector>>& rows() const { return rows_; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::pair<EmbeddingKey, EmbeddingVector>> rows_;
  std::map<EmbeddingKey, std::size_t> index_;
};

/// Writes `embeddings.bin` (magic `MCRE`, u32 version 1, u32 count, u32 dim,
/// then count*dim little-endian f32) plus the `embeddings.index.jsonl` sidecar.
void write_embedding_file(const EmbeddingStore& store, const std::filesystem::path& bin_path);

/// Reads a binary embedding file and its sidecar index (same directory,
/// `embeddings.index.jsonl` unless given). Errors: "bad magic",
/// "unsupported version", "truncated", "dimension mismatch".
EmbeddingStore load_embedding_file(const std::filesystem::path& bin_path,
                                   std::optional<std::filesystem::path> index_path = std::nullopt,
                                   std::string source_tag = "file");

std::filesystem::path embedding_index_path(const std::filesystem::path& bin_path);

struct EmbedServiceConfig {
  std::string url;  // e.g. http://127.0.0.1:8080
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::size_t batch_size = 64;
  std::chrono::seconds timeout{30};
};

/// POSTs `{"texts": [...]}` to `<url>/embed` and returns one vector per text
/// in input order. Retries with exponential backoff; an empty input list sends
/// no request. Errors: network failure after retries, non-200 status,
/// "count mismatch".
std::vector<EmbeddingVector> fetch_embeddings(std::span<const std::string> texts,
                                              const EmbedServiceConfig& config);

}  // namespace mcre
