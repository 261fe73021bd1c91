#include "mcre/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "mcre/error.hpp"
#include "mcre/json_io.hpp"
#include "mcre/rng.hpp"

namespace mcre {
namespace {

using nlohmann::json;

struct LineError {
  std::string file;
  std::size_t line;
  [[noreturn]] void raise(const std::string& what) const {
    throw Error(file + ":" + std::to_string(line) + ": " + what);
  }
};

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& handle) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LineError where{path.filename().string(), line_no};
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      where.raise(std::string("malformed line: ") + e.what());
    }
    if (!j.is_object()) where.raise("malformed line: expected a JSON object");
    try {
      handle(j, where);
    } catch (const json::exception& e) {
      where.raise(std::string("malformed record: ") + e.what());
    }
  }
}

QuestionRecord parse_question(const json& j, const LineError& where) {
  QuestionRecord q;
  q.question_id = j.at("question_id").get<std::string>();
  try {
    q.dataset = parse_dataset(j.at("dataset").get<std::string>());
    q.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
  } catch (const Error& e) {
    where.raise(e.what());
  }
  q.question_text = j.value("question_text", std::string{});
  q.gold_answer = j.at("gold_answer").get<std::string>();
  if (auto it = j.find("options"); it != j.end() && !it->is_null()) {
    for (const auto& o : *it) {
      OptionEntry opt;
      const auto letter = o.at("letter").get<std::string>();
      if (letter.size() != 1) where.raise("option letter must be a single character");
      opt.letter = static_cast<char>(std::toupper(static_cast<unsigned char>(letter[0])));
      opt.text = o.value("text", std::string{});
      if (auto f = o.find("flags"); f != o.end() && !f->is_null()) {
        for (const auto& flag : *f) {
          const auto name = flag.get<std::string>();
          if (name == "false_plausible") {
            opt.false_plausible = true;
          } else if (name == "non_committal") {
            opt.non_committal = true;
          } else {
            where.raise("unknown option flag '" + name + "'");
          }
        }
      }
      q.options.push_back(std::move(opt));
    }
  }
  if (q.question_id.empty()) where.raise("empty question_id");
  if (q.task_kind == TaskKind::multiple_choice) {
    if (q.options.empty()) where.raise("multiple_choice question " + q.question_id + " has no options");
    const auto gold = normalize_choice_letter(q.gold_answer);
    if (!gold || q.option(*gold) == nullptr)
      where.raise("gold_answer of " + q.question_id + " is not one of the option letters");
  }
  const bool flagged = std::any_of(q.options.begin(), q.options.end(),
                                   [](const OptionEntry& o) { return o.false_plausible || o.non_committal; });
  if (flagged && q.dataset != Dataset::truthfulqa)
    where.raise("option flags are only allowed on truthfulqa questions (" + q.question_id + ")");
  return q;
}

ResponseRecord response_from_json(const json& j, const LineError& where) {
  ResponseRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  r.sample_index = j.value("sample_index", 0);
  if (r.sample_index < 0) where.raise("sample_index must be >= 0");
  r.raw_text = j.at("raw_text").get<std::string>();
  if (auto it = j.find("self_confidence_raw"); it != j.end() && !it->is_null())
    r.self_confidence_raw = it->is_string() ? it->get<std::string>() : it->dump();
  if (auto it = j.find("mean_logprob"); it != j.end() && !it->is_null()) r.mean_logprob = it->get<double>();
  if (auto it = j.find("verifier_scores"); it != j.end() && !it->is_null()) {
    const auto v = it->get<std::vector<double>>();
    if (v.size() != 3) where.raise("verifier_scores must hold three values");
    for (double s : v)
      if (!(s >= 0.0 && s <= 1.0)) where.raise("verifier_scores must lie in [0,1]");
    r.verifier_scores = std::array<double, 3>{v[0], v[1], v[2]};
  }
  return r;
}

json dump_question(const QuestionRecord& q) {
  json j = {{"question_id", q.question_id},
            {"dataset", to_string(q.dataset)},
            {"task_kind", to_string(q.task_kind)},
            {"question_text", q.question_text},
            {"gold_answer", q.gold_answer}};
  if (!q.options.empty()) {
    json opts = json::array();
    for (const auto& o : q.options) {
      json flags = json::array();
      if (o.false_plausible) flags.push_back("false_plausible");
      if (o.non_committal) flags.push_back("non_committal");
      opts.push_back({{"letter", std::string(1, o.letter)}, {"text", o.text}, {"flags", flags}});
    }
    j["options"] = std::move(opts);
  } else {
    j["options"] = nullptr;
  }
  return j;
}

json response_to_json(const ResponseRecord& r) {
  json j = {{"question_id", r.question_id},
            {"model_id", r.model_id},
            {"sample_index", r.sample_index},
            {"raw_text", r.raw_text}};
  j["self_confidence_raw"] = r.self_confidence_raw ? json(*r.self_confidence_raw) : json(nullptr);
  j["mean_logprob"] = r.mean_logprob ? json(*r.mean_logprob) : json(nullptr);
  j["verifier_scores"] = r.verifier_scores ? json(*r.verifier_scores) : json(nullptr);
  return j;
}

}  // namespace

json question_to_json(const QuestionRecord& q) { return dump_question(q); }

QuestionRecord question_from_json(const json& j) {
  try {
    return parse_question(j, LineError{"question", 0});
  } catch (const json::exception& e) {
    throw Error(std::string("malformed question record: ") + e.what());
  }
}

json catalog_to_json(std::span<const ModelCatalogEntry> catalog) {
  json models = json::array();
  for (const auto& e : catalog) {
    json j = {{"model_id", e.model_id}, {"family", e.family}, {"log_param_count", e.log_param_count}};
    if (!e.per_dataset_prior_accuracy.empty()) j["per_dataset_prior_accuracy"] = e.per_dataset_prior_accuracy;
    models.push_back(std::move(j));
  }
  return models;
}

std::vector<ModelCatalogEntry> catalog_from_json(const json& j) {
  std::vector<ModelCatalogEntry> out;
  for (const auto& m : j) {
    ModelCatalogEntry e;
    e.model_id = m.at("model_id").get<std::string>();
    e.family = m.value("family", std::string{"unknown"});
    e.log_param_count = m.at("log_param_count").get<double>();
    if (auto it = m.find("per_dataset_prior_accuracy"); it != m.end())
      e.per_dataset_prior_accuracy = it->get<std::map<std::string, double>>();
    out.push_back(std::move(e));
  }
  return out;
}

std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::gsm8k: return "gsm8k";
    case Dataset::arc: return "arc";
    case Dataset::hellaswag: return "hellaswag";
    case Dataset::truthfulqa: return "truthfulqa";
    case Dataset::synthetic: return "synthetic";
  }
  return "synthetic";
}

std::string to_string(TaskKind k) { return k == TaskKind::numeric ? "numeric" : "multiple_choice"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Dataset parse_dataset(std::string_view s) {
  if (s == "gsm8k") return Dataset::gsm8k;
  if (s == "arc") return Dataset::arc;
  if (s == "hellaswag") return Dataset::hellaswag;
  if (s == "truthfulqa") return Dataset::truthfulqa;
  if (s == "synthetic") return Dataset::synthetic;
  throw Error("unknown dataset '" + std::string(s) + "'");
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "numeric") return TaskKind::numeric;
  if (s == "multiple_choice") return TaskKind::multiple_choice;
  throw Error("unknown task_kind '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("unknown split '" + std::string(s) + "'");
}

const OptionEntry* QuestionRecord::option(char letter) const {
  for (const auto& o : options)
    if (o.letter == letter) return &o;
  return nullptr;
}

bool value_matches_gold(const AnswerValue& value, const QuestionRecord& question) {
  if (!is_valid(value)) return false;
  if (question.task_kind == TaskKind::numeric) {
    const auto gold = normalize_numeric(question.gold_answer);
    if (!gold) throw Error("gold_answer '" + question.gold_answer + "' of " + question.question_id +
                           " is not a number");
    const auto* pred = std::get_if<double>(&value);
    if (pred == nullptr) return false;
    return std::abs(*pred - *gold) <= std::max(1e-9, 1e-6 * std::abs(*gold));
  }
  const auto gold = normalize_choice_letter(question.gold_answer);
  if (!gold) throw Error("gold_answer '" + question.gold_answer + "' of " + question.question_id +
                         " is not an option letter");
  const auto* pred = std::get_if<char>(&value);
  return pred != nullptr && *pred == *gold;
}

bool label_correctness(const ParsedAnswer& parsed, const QuestionRecord& question) {
  if (question.task_kind == TaskKind::numeric && !normalize_numeric(question.gold_answer))
    throw Error("gold_answer '" + question.gold_answer + "' of " + question.question_id + " is not a number");
  if (!parsed.is_valid) return false;
  return value_matches_gold(parsed.final_normalized, question);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;

  // Model catalog.
  {
    const auto path = dir / "models.json";
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error("models.json: malformed: " + std::string(e.what()));
    }
    const json& models = j.is_array() ? j : j.at("models");
    corpus.manifest.schema_version = j.is_object() ? j.value("schema_version", kCorpusSchemaVersion) : kCorpusSchemaVersion;
    if (corpus.manifest.schema_version != kCorpusSchemaVersion)
      throw Error("models.json: unsupported schema_version " + std::to_string(corpus.manifest.schema_version));
    std::set<std::string> seen;
    for (const auto& m : models) {
      ModelCatalogEntry e;
      e.model_id = m.at("model_id").get<std::string>();
      e.family = m.value("family", std::string{"unknown"});
      e.log_param_count = m.at("log_param_count").get<double>();
      if (!(e.log_param_count > 0.0)) throw Error("models.json: log_param_count must be > 0 for " + e.model_id);
      if (!seen.insert(e.model_id).second) throw Error("models.json: duplicate key model_id '" + e.model_id + "'");
      corpus.manifest.catalog.push_back(std::move(e));
    }
  }
  const std::size_t M = corpus.manifest.catalog.size();
  if (M < 2) throw Error("models.json: at least two models are required");
  std::map<std::string, std::size_t> model_index;
  for (std::size_t m = 0; m < M; ++m) model_index[corpus.manifest.catalog[m].model_id] = m;

  // Questions.
  std::map<std::string, std::size_t> question_index;
  for_each_jsonl(dir / "questions.jsonl", [&](const json& j, const LineError& where) {
    auto q = parse_question(j, where);
    if (question_index.count(q.question_id)) where.raise("duplicate key question_id '" + q.question_id + "'");
    question_index[q.question_id] = corpus.instances.size();
    ConsensusInstance inst;
    inst.question = std::move(q);
    inst.answers.resize(M);
    corpus.instances.push_back(std::move(inst));
  });

  // Responses.
  std::vector<std::vector<bool>> have(corpus.instances.size(), std::vector<bool>(M, false));
  std::set<std::tuple<std::string, std::string, int>> keys;
  std::map<std::pair<std::size_t, std::size_t>, std::map<int, ParsedAnswer>> extra;
  for_each_jsonl(dir / "responses.jsonl", [&](const json& j, const LineError& where) {
    auto r = response_from_json(j, where);
    if (!keys.emplace(r.question_id, r.model_id, r.sample_index).second)
      where.raise("duplicate key (" + r.question_id + ", " + r.model_id + ", " + std::to_string(r.sample_index) + ")");
    auto q = question_index.find(r.question_id);
    if (q == question_index.end()) where.raise("response for unknown question '" + r.question_id + "'");
    auto m = model_index.find(r.model_id);
    if (m == model_index.end()) where.raise("response for unknown model '" + r.model_id + "'");
    auto& inst = corpus.instances[q->second];
    auto parsed = parse_response(r.raw_text, inst.question.task_kind);
    extra[{q->second, m->second}][r.sample_index] = parsed;
    if (r.sample_index == 0) {
      inst.answers[m->second].parsed = std::move(parsed);
      inst.answers[m->second].response = std::move(r);
      have[q->second][m->second] = true;
    }
  });
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    for (std::size_t m = 0; m < M; ++m) {
      if (!have[i][m])
        throw Error("missing canonical response for (" + corpus.instances[i].question.question_id + ", " +
                    corpus.manifest.catalog[m].model_id + ")");
    }
  }
  for (auto& [key, by_index] : extra) {
    if (by_index.size() < 2) continue;
    auto& samples = corpus.instances[key.first].samples[key.second];
    for (auto& [idx, parsed] : by_index) samples.push_back(std::move(parsed));
  }

  for (auto& inst : corpus.instances) {
    inst.correctness.resize(M);
    for (std::size_t m = 0; m < M; ++m)
      inst.correctness[m] = label_correctness(inst.answers[m].parsed, inst.question) ? 1 : 0;
    corpus.manifest.dataset_counts[to_string(inst.question.dataset)]++;
  }

  // Optional embeddings.
  const auto bin = dir / "embeddings.bin";
  if (std::filesystem::exists(bin)) {
    const auto store = load_embedding_file(bin);
    bool complete = true;
    for (auto& inst : corpus.instances) {
      for (std::size_t m = 0; m < M; ++m) {
        const auto* e = store.find(inst.question.question_id, corpus.manifest.catalog[m].model_id);
        if (e) {
          inst.answers[m].embedding = *e;
        } else {
          complete = false;
        }
      }
      if (const auto* qe = store.find(inst.question.question_id, std::string(kQuestionEmbeddingModel)))
        inst.question_embedding = *qe;
    }
    corpus.has_embeddings = complete;
  }

  corpus.manifest.num_questions = corpus.instances.size();
  corpus.manifest.num_models = M;
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, std::span<const QuestionRecord> questions,
                  std::span<const ResponseRecord> responses, std::span<const ModelCatalogEntry> catalog,
                  const EmbeddingStore* embeddings) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "questions.jsonl", std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "questions.jsonl").string());
    for (const auto& q : questions) out << dump_question(q).dump() << '\n';
  }
  {
    std::ofstream out(dir / "responses.jsonl", std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "responses.jsonl").string());
    for (const auto& r : responses) out << response_to_json(r).dump() << '\n';
  }
  {
    json models = json::array();
    for (const auto& m : catalog)
      models.push_back({{"model_id", m.model_id}, {"family", m.family}, {"log_param_count", m.log_param_count}});
    std::ofstream out(dir / "models.json", std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "models.json").string());
    out << json{{"schema_version", kCorpusSchemaVersion}, {"models", models}}.dump(2) << '\n';
  }
  if (embeddings != nullptr) write_embedding_file(*embeddings, dir / "embeddings.bin");
}

std::vector<Split> assign_splits(std::span<const SplitKey> keys, const SplitRatios& ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw Error("split ratios must be non-negative and sum to 1");
  if (keys.size() < 10)
    throw Error("assign_splits: need at least 10 questions, got " + std::to_string(keys.size()));

  std::map<Dataset, std::vector<std::size_t>> by_dataset;
  for (std::size_t i = 0; i < keys.size(); ++i) by_dataset[keys[i].dataset].push_back(i);

  std::vector<Split> out(keys.size(), Split::train);
  const std::uint64_t salt = Rng(seed).next_u64();
  for (auto& [dataset, idx] : by_dataset) {
    // Order by a seeded hash of the id; ties (hash collisions) fall back to the id.
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    order.reserve(idx.size());
    for (auto i : idx) order.emplace_back(fnv1a64(keys[i].question_id, salt), i);
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return keys[a.second].question_id < keys[b.second].question_id;
    });

    // Largest-remainder apportionment keeps every count within one question of its target.
    const double n = static_cast<double>(idx.size());
    const std::array<double, 3> target = {ratios.train * n, ratios.val * n, ratios.test * n};
    std::array<std::size_t, 3> count{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      count[s] = static_cast<std::size_t>(std::floor(target[s] + 1e-9));
      assigned += count[s];
    }
    std::array<int, 3> by_remainder = {0, 1, 2};
    std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](int a, int b) {
      return target[a] - std::floor(target[a] + 1e-9) > target[b] - std::floor(target[b] + 1e-9);
    });
    for (int k = 0; assigned < idx.size(); ++k, ++assigned) count[by_remainder[k % 3]]++;

    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < count[s]; ++c) out[order[pos++].second] = static_cast<Split>(s);
  }
  return out;
}

void assign_splits(std::vector<ConsensusInstance>& instances, const SplitRatios& ratios, std::uint64_t seed) {
  std::vector<SplitKey> keys;
  keys.reserve(instances.size());
  for (const auto& inst : instances) keys.push_back({inst.question.question_id, inst.question.dataset});
  const auto splits = assign_splits(keys, ratios, seed);
  for (std::size_t i = 0; i < instances.size(); ++i) instances[i].split = splits[i];
}

}  // namespace mcre
