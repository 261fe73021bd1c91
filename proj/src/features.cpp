#include "mcre/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "mcre/error.hpp"
#include "mcre/rng.hpp"

namespace mcre {
namespace {

const std::vector<std::string> kDiscourseMarkers = {"therefore", "thus", "hence", "in conclusion", "so"};
const std::vector<std::string> kStepMarkers = {"step <digit>", "first", "second", "third", "finally"};
const std::vector<std::string> kVerificationPhrases = {"check", "verify", "sanity check"};

std::size_t count_phrase(std::span<const std::string> tokens, std::string_view phrase) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < phrase.size()) {
    auto end = phrase.find(' ', start);
    if (end == std::string_view::npos) end = phrase.size();
    words.emplace_back(phrase.substr(start, end - start));
    start = end + 1;
  }
  if (words.empty() || tokens.size() < words.size()) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + words.size() <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t w = 0; w < words.size() && match; ++w) match = tokens[i + w] == words[w];
    if (match) ++count;
  }
  return count;
}

std::vector<std::string> answer_tokens(const ParsedAnswer& p) {
  auto tokens = tokenize(p.reasoning_text);
  auto final_tokens = tokenize(p.final_raw);
  tokens.insert(tokens.end(), final_tokens.begin(), final_tokens.end());
  return tokens;
}

}  // namespace

// ---------------------------------------------------------------------------

SemanticStats semantic_agreement_stats(const SimilarityMatrix& similarity,
                                       std::span<const EmbeddingVector> embeddings) {
  const std::size_t M = similarity.size();
  if (M < 2) throw Error("semantic_agreement_stats: need at least two answers");
  if (embeddings.size() != M) throw Error("semantic_agreement_stats: embedding count mismatch");
  SemanticStats st;
  st.mean_sim.resize(M);
  st.max_sim.resize(M);
  st.min_sim.resize(M);
  st.centroid_sim.resize(M);
  st.agreement_rank.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    double sum = 0.0;
    double mx = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < M; ++n) {
      if (n == m) continue;
      const double s = similarity(m, n);
      sum += s;
      mx = std::max(mx, s);
      mn = std::min(mn, s);
    }
    st.mean_sim[m] = sum / static_cast<double>(M - 1);
    st.max_sim[m] = mx;
    st.min_sim[m] = mn;
  }
  const auto center = centroid(embeddings);
  if (norm(center) == 0.0) throw Error("semantic_agreement_stats: zero-norm centroid");
  for (std::size_t m = 0; m < M; ++m) st.centroid_sim[m] = cosine_similarity(embeddings[m], center);

  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return st.mean_sim[a] > st.mean_sim[b]; });
  for (std::size_t r = 0; r < M; ++r) st.agreement_rank[order[r]] = r + 1;
  return st;
}

// ---------------------------------------------------------------------------

void finalize_cluster_features(ClusterAssignment& a) {
  const std::size_t M = a.cluster_id.size();
  a.cluster_sizes.assign(a.num_clusters, 0);
  for (auto c : a.cluster_id) a.cluster_sizes.at(c)++;
  std::size_t major = 0;
  for (std::size_t k = 1; k < a.num_clusters; ++k)
    if (a.cluster_sizes[k] > a.cluster_sizes[major]) major = k;
  a.major_flag.assign(M, 0);
  for (std::size_t m = 0; m < M; ++m) a.major_flag[m] = a.cluster_id[m] == major ? 1 : 0;
  a.major_ratio = M == 0 ? 0.0 : static_cast<double>(a.cluster_sizes[major]) / static_cast<double>(M);
}

ClusterAssignment agglomerative_cluster(const Eigen::MatrixXd& distance, std::size_t k,
                                        std::vector<MergeStep>* trace) {
  const auto M = static_cast<std::size_t>(distance.rows());
  if (k < 1 || k > M) throw Error("agglomerative_cluster: K must lie in [1, M]");

  // Each active cluster is the sorted list of its members; representatives
  // are the first (smallest) member.
  std::vector<std::vector<std::size_t>> clusters(M);
  for (std::size_t m = 0; m < M; ++m) clusters[m] = {m};

  const auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double sum = 0.0;
    for (auto i : a)
      for (auto j : b) sum += distance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return sum / static_cast<double>(a.size() * b.size());
  };

  while (clusters.size() > k) {
    std::size_t best_a = 0;
    std::size_t best_b = 1;
    double best = std::numeric_limits<double>::infinity();
    // Clusters stay sorted by representative, so this scan visits pairs in
    // lexicographic order and only a strictly smaller linkage displaces the incumbent.
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double d = linkage(clusters[a], clusters[b]);
        if (d < best - 1e-12) {
          best = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (trace) trace->push_back({clusters[best_a].front(), clusters[best_b].front(), best});
    auto merged = clusters[best_a];
    merged.insert(merged.end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(merged.begin(), merged.end());
    clusters[best_a] = std::move(merged);
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
  }

  ClusterAssignment out;
  out.num_clusters = clusters.size();
  out.cluster_id.assign(M, 0);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto m : clusters[c]) out.cluster_id[m] = c;
  finalize_cluster_features(out);
  return out;
}

ClusterAssignment agglomerative_cluster(std::span<const EmbeddingVector> embeddings, std::size_t k) {
  if (embeddings.size() == 1) {
    ClusterAssignment a;
    a.cluster_id = {0};
    finalize_cluster_features(a);
    return a;
  }
  return agglomerative_cluster(cosine_distance(build_similarity_matrix(embeddings)), k);
}

double mean_silhouette(const Eigen::MatrixXd& distance, std::span<const std::size_t> labels) {
  const std::size_t M = labels.size();
  if (M == 0) return 0.0;
  const std::size_t K = *std::max_element(labels.begin(), labels.end()) + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> sum(K, 0.0);
    std::vector<std::size_t> count(K, 0);
    for (std::size_t j = 0; j < M; ++j) {
      if (j == i) continue;
      sum[labels[j]] += distance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      count[labels[j]]++;
    }
    const std::size_t own = labels[i];
    if (count[own] == 0) continue;  // singleton: s(i) = 0
    const double a = sum[own] / static_cast<double>(count[own]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < K; ++c)
      if (c != own && count[c] > 0) b = std::min(b, sum[c] / static_cast<double>(count[c]));
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(M);
}

std::size_t select_k_silhouette(const SimilarityMatrix& similarity) {
  const std::size_t M = similarity.size();
  if (M < 2) return 1;
  double min_off = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t n = m + 1; n < M; ++n) min_off = std::min(min_off, similarity(m, n));
  if (min_off >= kAllAgreeSimilarity) return 1;
  if (M <= 3) return 2;

  const auto distance = cosine_distance(similarity);
  std::size_t best_k = 2;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k <= M - 1; ++k) {
    const auto assignment = agglomerative_cluster(distance, k);
    const double s = mean_silhouette(distance, assignment.cluster_id);
    if (s > best + 1e-12) {
      best = s;
      best_k = k;
    }
  }
  return best_k;
}

std::size_t select_k_silhouette(std::span<const EmbeddingVector> embeddings) {
  if (embeddings.size() < 2) return 1;
  return select_k_silhouette(build_similarity_matrix(embeddings));
}

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::string_view raw = text.substr(start, i - start);
    while (!raw.empty() && std::ispunct(static_cast<unsigned char>(raw.front())) && raw.front() != '-' &&
           raw.front() != '.' && raw.front() != '$')
      raw.remove_prefix(1);
    while (!raw.empty() && std::ispunct(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
    if (raw.empty()) continue;
    std::string tok(raw);
    std::transform(tok.begin(), tok.end(), tok.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

bool is_numeric_token(std::string_view token) {
  if (token.empty() || std::none_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); }))
    return false;
  return normalize_numeric(token).has_value();
}

LexicalFeatures lexical_features(const ParsedAnswer& parsed) {
  LexicalFeatures f;
  const auto reasoning = tokenize(parsed.reasoning_text);
  f.token_count_reasoning = static_cast<double>(reasoning.size());
  f.char_len_reasoning = static_cast<double>(parsed.reasoning_text.size());
  if (parsed.is_valid) {
    f.token_count_final = static_cast<double>(tokenize(parsed.final_raw).size());
    f.char_len_final = static_cast<double>(parsed.final_raw.size());
  }
  f.numeric_token_count =
      static_cast<double>(std::count_if(reasoning.begin(), reasoning.end(), [](const auto& t) { return is_numeric_token(t); }));
  f.numeric_token_ratio = reasoning.empty() ? 0.0 : f.numeric_token_count / f.token_count_reasoning;
  std::size_t markers = 0;
  for (const auto& marker : kDiscourseMarkers) markers += count_phrase(reasoning, marker);
  f.discourse_marker_count = static_cast<double>(markers);
  return f;
}

double jaccard_similarity(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double rouge_l_f1(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[b.size()]);
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(a.size());
  const double recall = lcs / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

PairwiseLexical pairwise_lexical_aggregates(std::span<const ParsedAnswer> answers) {
  const std::size_t M = answers.size();
  if (M < 2) throw Error("pairwise_lexical_aggregates: need at least two answers");
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(M);
  for (const auto& a : answers) tokens.push_back(answer_tokens(a));

  Eigen::MatrixXd jac = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
  Eigen::MatrixXd rouge = jac;
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = m + 1; n < M; ++n) {
      const auto mi = static_cast<Eigen::Index>(m);
      const auto ni = static_cast<Eigen::Index>(n);
      jac(mi, ni) = jac(ni, mi) = jaccard_similarity(tokens[m], tokens[n]);
      rouge(mi, ni) = rouge(ni, mi) = rouge_l_f1(tokens[m], tokens[n]);
    }
  }
  PairwiseLexical out;
  for (std::size_t m = 0; m < M; ++m) {
    double sj = 0, mj = 0, sr = 0, mr = 0;
    for (std::size_t n = 0; n < M; ++n) {
      if (n == m) continue;
      const double j = jac(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      const double r = rouge(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      sj += j;
      sr += r;
      mj = std::max(mj, j);
      mr = std::max(mr, r);
    }
    out.mean_jaccard.push_back(sj / static_cast<double>(M - 1));
    out.max_jaccard.push_back(mj);
    out.mean_rouge_l.push_back(sr / static_cast<double>(M - 1));
    out.max_rouge_l.push_back(mr);
  }
  return out;
}

// ---------------------------------------------------------------------------

ReasoningScores reasoning_features(const ResponseRecord& record, const ParsedAnswer& parsed) {
  ReasoningScores r;
  if (record.verifier_scores) {
    r.coherence = (*record.verifier_scores)[0];
    r.consistency = (*record.verifier_scores)[1];
    r.completeness = (*record.verifier_scores)[2];
    r.present = true;
  }
  const auto tokens = tokenize(parsed.reasoning_text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == "first" || t == "second" || t == "third" || t == "finally") {
      ++r.step_count;
    } else if (t == "step" && i + 1 < tokens.size() && std::isdigit(static_cast<unsigned char>(tokens[i + 1][0]))) {
      ++r.step_count;
    }
    if (t == "check" || t == "verify") r.has_verification_phrase = true;
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<std::string> catalog_families(std::span<const ModelCatalogEntry> catalog) {
  std::vector<std::string> families;
  for (const auto& e : catalog)
    if (std::find(families.begin(), families.end(), e.family) == families.end()) families.push_back(e.family);
  return families;
}

ConfidencePriorFeatures confidence_prior_features(const ResponseRecord& record,
                                                  std::span<const ModelCatalogEntry> catalog, Dataset dataset) {
  const auto it = std::find_if(catalog.begin(), catalog.end(),
                               [&](const ModelCatalogEntry& e) { return e.model_id == record.model_id; });
  if (it == catalog.end()) throw Error("unknown model_id '" + record.model_id + "'");
  const auto index = static_cast<std::size_t>(it - catalog.begin());

  ConfidencePriorFeatures f;
  if (record.self_confidence_raw) {
    if (auto c = normalize_confidence(*record.self_confidence_raw)) {
      f.self_conf = *c;
      f.conf_present = true;
    }
  }
  if (record.mean_logprob && std::isfinite(*record.mean_logprob)) {
    f.mean_logprob = *record.mean_logprob;
    f.logprob_present = true;
  }
  f.model_one_hot.assign(catalog.size(), 0.0);
  f.model_one_hot[index] = 1.0;
  const auto prior = it->per_dataset_prior_accuracy.find(to_string(dataset));
  if (prior == it->per_dataset_prior_accuracy.end())
    throw Error("prior accuracy for model '" + it->model_id + "' on " + to_string(dataset) + " has not been fitted");
  f.prior_accuracy = prior->second;
  f.log_param_count = it->log_param_count;
  const auto families = catalog_families(catalog);
  f.family_one_hot.assign(families.size(), 0.0);
  f.family_one_hot[static_cast<std::size_t>(std::find(families.begin(), families.end(), it->family) - families.begin())] = 1.0;
  return f;
}

void fit_prior_accuracy(std::vector<ModelCatalogEntry>& catalog, std::span<const ConsensusInstance> instances) {
  std::map<std::string, std::pair<std::vector<double>, double>> tally;  // dataset -> (correct per model, count)
  for (const auto& inst : instances) {
    auto& [correct, count] = tally[to_string(inst.question.dataset)];
    correct.resize(catalog.size(), 0.0);
    for (std::size_t m = 0; m < catalog.size(); ++m) correct[m] += inst.correctness.at(m);
    count += 1.0;
  }
  for (auto& e : catalog) e.per_dataset_prior_accuracy.clear();
  for (const auto& [dataset, t] : tally)
    for (std::size_t m = 0; m < catalog.size(); ++m)
      catalog[m].per_dataset_prior_accuracy[dataset] = t.first[m] / t.second;
}

// ---------------------------------------------------------------------------

std::string to_string(FeatureBlock block) {
  switch (block) {
    case FeatureBlock::sem: return "sem";
    case FeatureBlock::lex: return "lex";
    case FeatureBlock::logic: return "logic";
    case FeatureBlock::conf: return "conf";
    case FeatureBlock::prior: return "prior";
  }
  return "sem";
}

FeatureBlock parse_feature_block(std::string_view name) {
  if (name == "sem") return FeatureBlock::sem;
  if (name == "lex") return FeatureBlock::lex;
  if (name == "logic") return FeatureBlock::logic;
  if (name == "conf") return FeatureBlock::conf;
  if (name == "prior") return FeatureBlock::prior;
  throw Error("unknown feature block '" + std::string(name) + "'");
}

std::size_t FeatureManifest::block_dim(FeatureBlock block) const {
  return static_cast<std::size_t>(
      std::count_if(features.begin(), features.end(), [&](const FeatureSpec& f) { return f.block == block; }));
}

std::vector<std::size_t> FeatureManifest::columns_of(std::span<const FeatureBlock> blocks) const {
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (std::find(blocks.begin(), blocks.end(), features[i].block) != blocks.end()) cols.push_back(i);
  return cols;
}

std::vector<bool> FeatureManifest::categorical_mask() const {
  std::vector<bool> mask;
  mask.reserve(features.size());
  for (const auto& f : features) mask.push_back(f.categorical);
  return mask;
}

std::size_t FeatureManifest::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return i;
  throw Error("feature '" + std::string(name) + "' not in manifest");
}

FeatureManifest build_feature_manifest(std::span<const ModelCatalogEntry> catalog) {
  FeatureManifest man;
  man.version = kFeatureManifestVersion;
  man.discourse_markers = kDiscourseMarkers;
  man.step_markers = kStepMarkers;
  man.verification_phrases = kVerificationPhrases;
  const auto add = [&](std::string name, FeatureBlock block, bool categorical = false) {
    man.features.push_back({std::move(name), block, categorical});
  };
  using B = FeatureBlock;
  for (const char* n : {"sem.mean_sim", "sem.max_sim", "sem.min_sim", "sem.centroid_sim", "sem.agreement_rank",
                        "sem.num_clusters", "sem.cluster_size"})
    add(n, B::sem);
  add("sem.major_flag", B::sem, true);
  add("sem.major_ratio", B::sem);
  for (std::size_t k = 0; k < catalog.size(); ++k) add("sem.cluster_id=" + std::to_string(k), B::sem, true);

  for (const char* n : {"lex.token_count_reasoning", "lex.token_count_final", "lex.char_len_reasoning",
                        "lex.char_len_final", "lex.numeric_token_count", "lex.numeric_token_ratio",
                        "lex.discourse_marker_count", "lex.mean_jaccard", "lex.max_jaccard", "lex.mean_rouge_l",
                        "lex.max_rouge_l"})
    add(n, B::lex);
  add("lex.is_valid", B::lex, true);

  add("logic.coherence", B::logic);
  add("logic.consistency", B::logic);
  add("logic.completeness", B::logic);
  add("logic.verifier_present", B::logic, true);
  add("logic.step_count", B::logic);
  add("logic.has_verification", B::logic, true);

  add("conf.self_conf", B::conf);
  add("conf.conf_present", B::conf, true);
  add("conf.mean_logprob", B::conf);
  add("conf.logprob_present", B::conf, true);

  for (const auto& e : catalog) add("prior.model=" + e.model_id, B::prior, true);
  add("prior.prior_accuracy", B::prior);
  add("prior.log_param_count", B::prior);
  for (const auto& f : catalog_families(catalog)) add("prior.family=" + f, B::prior, true);

  man.hash = compute_manifest_hash(man);
  return man;
}

std::string compute_manifest_hash(const FeatureManifest& manifest) {
  nlohmann::json canon;
  canon["version"] = manifest.version;
  for (const auto& f : manifest.features) canon["features"].push_back({f.name, to_string(f.block), f.categorical});
  canon["discourse_markers"] = manifest.discourse_markers;
  canon["step_markers"] = manifest.step_markers;
  canon["verification_phrases"] = manifest.verification_phrases;
  return hex64(fnv1a64(canon.dump()));
}

std::vector<double> assemble_feature_vector(const FeatureManifest& manifest, std::span<const BlockValues> blocks) {
  static constexpr FeatureBlock kOrder[] = {FeatureBlock::sem, FeatureBlock::lex, FeatureBlock::logic,
                                            FeatureBlock::conf, FeatureBlock::prior};
  if (blocks.size() != std::size(kOrder))
    throw Error("assemble_feature_vector: expected 5 blocks, got " + std::to_string(blocks.size()));
  std::vector<double> phi;
  phi.reserve(manifest.dim());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].block != kOrder[b])
      throw Error("assemble_feature_vector: block '" + to_string(blocks[b].block) + "' at position " +
                  std::to_string(b) + ", expected '" + to_string(kOrder[b]) + "'");
    const std::size_t want = manifest.block_dim(kOrder[b]);
    if (blocks[b].values.size() != want)
      throw Error("assemble_feature_vector: dimension mismatch in block '" + to_string(kOrder[b]) + "': expected " +
                  std::to_string(want) + ", got " + std::to_string(blocks[b].values.size()));
    phi.insert(phi.end(), blocks[b].values.begin(), blocks[b].values.end());
  }
  for (double x : phi)
    if (!std::isfinite(x)) throw Error("assemble_feature_vector: non-finite feature");
  return phi;
}

InstanceFeatures extract_instance_features(const ConsensusInstance& instance, const FeatureManifest& manifest,
                                           std::span<const ModelCatalogEntry> catalog) {
  const std::size_t M = instance.answers.size();
  std::vector<EmbeddingVector> embeddings;
  embeddings.reserve(M);
  std::vector<ParsedAnswer> parsed;
  parsed.reserve(M);
  for (const auto& a : instance.answers) {
    if (!a.embedding)
      throw Error("missing embedding for (" + instance.question.question_id + ", " + a.response.model_id + ")");
    embeddings.push_back(*a.embedding);
    parsed.push_back(a.parsed);
  }

  InstanceFeatures out;
  out.similarity = build_similarity_matrix(embeddings);
  const auto sem = semantic_agreement_stats(out.similarity, embeddings);
  const std::size_t k = select_k_silhouette(out.similarity);
  out.clusters = agglomerative_cluster(cosine_distance(out.similarity), k);
  const auto pairwise = pairwise_lexical_aggregates(parsed);

  out.rows.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(manifest.dim()));
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<BlockValues> blocks(5);
    auto& s = blocks[0];
    s.block = FeatureBlock::sem;
    s.values = {sem.mean_sim[m],
                sem.max_sim[m],
                sem.min_sim[m],
                sem.centroid_sim[m],
                static_cast<double>(sem.agreement_rank[m]),
                static_cast<double>(out.clusters.num_clusters),
                static_cast<double>(out.clusters.cluster_sizes[out.clusters.cluster_id[m]]),
                static_cast<double>(out.clusters.major_flag[m]),
                out.clusters.major_ratio};
    for (std::size_t c = 0; c < M; ++c) s.values.push_back(out.clusters.cluster_id[m] == c ? 1.0 : 0.0);

    const auto lex = lexical_features(parsed[m]);
    blocks[1].block = FeatureBlock::lex;
    blocks[1].values = {lex.token_count_reasoning, lex.token_count_final,       lex.char_len_reasoning,
                        lex.char_len_final,        lex.numeric_token_count,     lex.numeric_token_ratio,
                        lex.discourse_marker_count, pairwise.mean_jaccard[m],   pairwise.max_jaccard[m],
                        pairwise.mean_rouge_l[m],  pairwise.max_rouge_l[m],     parsed[m].is_valid ? 1.0 : 0.0};

    const auto logic = reasoning_features(instance.answers[m].response, parsed[m]);
    blocks[2].block = FeatureBlock::logic;
    blocks[2].values = {logic.coherence,
                        logic.consistency,
                        logic.completeness,
                        logic.present ? 1.0 : 0.0,
                        static_cast<double>(logic.step_count),
                        logic.has_verification_phrase ? 1.0 : 0.0};

    const auto cp = confidence_prior_features(instance.answers[m].response, catalog, instance.question.dataset);
    blocks[3].block = FeatureBlock::conf;
    blocks[3].values = {cp.self_conf, cp.conf_present ? 1.0 : 0.0, cp.mean_logprob, cp.logprob_present ? 1.0 : 0.0};
    blocks[4].block = FeatureBlock::prior;
    blocks[4].values = cp.model_one_hot;
    blocks[4].values.push_back(cp.prior_accuracy);
    blocks[4].values.push_back(cp.log_param_count);
    blocks[4].values.insert(blocks[4].values.end(), cp.family_one_hot.begin(), cp.family_one_hot.end());

    const auto phi = assemble_feature_vector(manifest, blocks);
    for (std::size_t j = 0; j < phi.size(); ++j)
      out.rows(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) = phi[j];
  }
  return out;
}

}  // namespace mcre
