#include "mcre/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mcre/error.hpp"

namespace mcre {
namespace {

constexpr char kMagic[4] = {'M', 'C', 'R', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

double norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (double x : v.values) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) throw Error("cosine_similarity: dimension mismatch");
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw Error("cosine_similarity: zero-norm vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) dot += u.values[i] * v.values[i];
  return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

EmbeddingVector concat_embeddings(const EmbeddingVector& a, const EmbeddingVector& b) {
  EmbeddingVector out;
  out.values.reserve(a.dim() + b.dim());
  out.values.insert(out.values.end(), a.values.begin(), a.values.end());
  out.values.insert(out.values.end(), b.values.begin(), b.values.end());
  if (a.source_tag.empty() || b.dim() == 0) {
    out.source_tag = a.dim() == 0 ? b.source_tag : a.source_tag;
  } else if (b.source_tag.empty() || a.dim() == 0) {
    out.source_tag = a.source_tag;
  } else {
    out.source_tag = a.source_tag + "+" + b.source_tag;
  }
  return out;
}

EmbeddingVector centroid(std::span<const EmbeddingVector> vectors) {
  if (vectors.empty()) throw Error("centroid: empty list");
  EmbeddingVector out;
  out.source_tag = vectors.front().source_tag;
  out.values.assign(vectors.front().dim(), 0.0);
  for (const auto& v : vectors) {
    if (v.dim() != out.dim()) throw Error("centroid: dimension mismatch");
    for (std::size_t i = 0; i < v.dim(); ++i) out.values[i] += v.values[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double& x : out.values) x /= n;
  return out;
}

void EmbeddingStore::put(const std::string& question_id, const std::string& model_id, EmbeddingVector vec) {
  if (vec.dim() == 0) throw Error("embedding store: empty vector");
  if (dim_ == 0) dim_ = vec.dim();
  if (vec.dim() != dim_)
    throw Error("dimension mismatch: store has " + std::to_string(dim_) + ", got " + std::to_string(vec.dim()));
  for (double x : vec.values)
    if (!std::isfinite(x)) throw Error("embedding store: non-finite entry for " + question_id + "/" + model_id);
  EmbeddingKey key{question_id, model_id};
  if (auto it = index_.find(key); it != index_.end()) {
    rows_[it->second].second = std::move(vec);
    return;
  }
  index_.emplace(key, rows_.size());
  rows_.emplace_back(std::move(key), std::move(vec));
}

const EmbeddingVector* EmbeddingStore::find(const std::string& question_id, const std::string& model_id) const {
  auto it = index_.find(EmbeddingKey{question_id, model_id});
  return it == index_.end() ? nullptr : &rows_[it->second].second;
}

bool EmbeddingStore::contains(const std::string& question_id, const std::string& model_id) const {
  return find(question_id, model_id) != nullptr;
}

std::filesystem::path embedding_index_path(const std::filesystem::path& bin_path) {
  return bin_path.parent_path() / "embeddings.index.jsonl";
}

void write_embedding_file(const EmbeddingStore& store, const std::filesystem::path& bin_path) {
  std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + bin_path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(store.count()));
  put_u32(out, static_cast<std::uint32_t>(store.dim()));
  for (const auto& [key, vec] : store.rows()) {
    for (double x : vec.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
      put_u32(out, bits);
    }
  }
  if (!out) throw Error("write failed: " + bin_path.string());

  std::ofstream idx(embedding_index_path(bin_path), std::ios::trunc);
  if (!idx) throw Error("cannot write embedding index beside " + bin_path.string());
  std::size_t row = 0;
  for (const auto& [key, vec] : store.rows()) {
    nlohmann::json line = {{"row", row++}, {"question_id", key.first}, {"model_id", key.second}};
    idx << line.dump() << '\n';
  }
}

EmbeddingStore load_embedding_file(const std::filesystem::path& bin_path,
                                   std::optional<std::filesystem::path> index_path, std::string source_tag) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("cannot open " + bin_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("bad magic");
    throw Error("truncated: header shorter than 16 bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error("bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kVersion) throw Error("unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(bytes.data() + 8);
  const std::uint32_t dim = get_u32(bytes.data() + 12);
  if (dim == 0 && count > 0) throw Error("dimension mismatch: zero dimension with non-zero count");
  const std::uint64_t payload = static_cast<std::uint64_t>(count) * dim * 4;
  if (bytes.size() - 16 < payload)
    throw Error("truncated: expected " + std::to_string(payload) + " payload bytes, found " +
                std::to_string(bytes.size() - 16));
  if (bytes.size() - 16 > payload) throw Error("dimension mismatch: trailing bytes after payload");

  const auto idx_path = index_path.value_or(embedding_index_path(bin_path));
  std::ifstream idx(idx_path);
  if (!idx) throw Error("cannot open embedding index " + idx_path.string());
  std::vector<std::optional<EmbeddingKey>> keys(count);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(idx, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(idx_path.filename().string() + ":" + std::to_string(line_no) + ": malformed line: " + e.what());
    }
    const auto row = j.at("row").get<std::uint64_t>();
    if (row >= count)
      throw Error(idx_path.filename().string() + ":" + std::to_string(line_no) + ": row out of range");
    if (keys[row]) throw Error(idx_path.filename().string() + ":" + std::to_string(line_no) + ": duplicate row");
    keys[row] = EmbeddingKey{j.at("question_id").get<std::string>(), j.at("model_id").get<std::string>()};
  }

  EmbeddingStore store(dim);
  const unsigned char* p = bytes.data() + 16;
  for (std::uint32_t r = 0; r < count; ++r) {
    if (!keys[r]) throw Error("embedding index missing row " + std::to_string(r));
    EmbeddingVector v;
    v.source_tag = source_tag;
    v.values.resize(dim);
    for (std::uint32_t c = 0; c < dim; ++c, p += 4)
      v.values[c] = static_cast<double>(std::bit_cast<float>(get_u32(p)));
    store.put(keys[r]->first, keys[r]->second, std::move(v));
  }
  return store;
}

std::vector<EmbeddingVector> fetch_embeddings(std::span<const std::string> texts, const EmbedServiceConfig& config) {
  std::vector<EmbeddingVector> result;
  if (texts.empty()) return result;
  result.reserve(texts.size());

  httplib::Client client(config.url);
  client.set_connection_timeout(config.timeout);
  client.set_read_timeout(config.timeout);

  for (std::size_t start = 0; start < texts.size(); start += config.batch_size) {
    const std::size_t end = std::min(texts.size(), start + config.batch_size);
    nlohmann::json body;
    body["texts"] = nlohmann::json::array();
    for (std::size_t i = start; i < end; ++i) body["texts"].push_back(texts[i]);
    const std::string payload = body.dump();

    std::string last_error;
    std::optional<std::string> response_body;
    auto backoff = config.initial_backoff;
    for (int attempt = 0; attempt < std::max(1, config.attempts); ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      auto res = client.Post("/embed", payload, "application/json");
      if (!res) {
        last_error = "network failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "embedding service returned status " + std::to_string(res->status);
        continue;
      }
      response_body = res->body;
      break;
    }
    if (!response_body)
      throw Error("fetch_embeddings: " + last_error + " after " + std::to_string(config.attempts) + " attempts");

    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(*response_body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("fetch_embeddings: malformed response: ") + e.what());
    }
    const auto& rows = reply.at("embeddings");
    if (!rows.is_array() || rows.size() != end - start)
      throw Error("count mismatch: sent " + std::to_string(end - start) + " texts, received " +
                  std::to_string(rows.is_array() ? rows.size() : 0) + " embeddings");
    for (const auto& row : rows) {
      EmbeddingVector v;
      v.source_tag = "service";
      v.values = row.get<std::vector<double>>();
      result.push_back(std::move(v));
    }
  }
  return result;
}

}  // namespace mcre
