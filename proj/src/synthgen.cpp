#include "mcre/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mcre/error.hpp"
#include "mcre/format.hpp"
#include "mcre/pipeline.hpp"
#include "mcre/rng.hpp"

namespace mcre {

void SynthConfig::validate() const {
  const auto M = num_models();
  if (M < 2) throw Error("synth config: need at least two models");
  if (num_questions == 0) throw Error("synth config: num_questions must be positive");
  if (decoy_of.size() != M) throw Error("synth config: decoy_of needs one entry per model");
  if (overconfidence.size() != M) throw Error("synth config: overconfidence needs one entry per model");
  if (num_decoys == 0) throw Error("synth config: num_decoys must be positive");
  for (const auto d : decoy_of)
    if (d >= num_decoys) throw Error("synth config: decoy index out of range");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(std::string("synth config: ") + name + " must lie in [0, 1]");
  };
  for (const auto s : skills) unit(s, "skills");
  for (const auto o : overconfidence) unit(o, "overconfidence");
  unit(decoy_share, "decoy_share");
  unit(numeric_fraction, "numeric_fraction");
  unit(invalid_rate, "invalid_rate");
  unit(confidence_spread, "confidence_spread");
  unit(sc_slip, "sc_slip");
  if (!(sigma_truth > 0.0) || !(sigma_decoy > 0.0)) throw Error("synth config: sigmas must be positive");
  if (!(verifier_noise >= 0.0)) throw Error("synth config: verifier_noise must be non-negative");
  if (dim < 2) throw Error("synth config: dim must be at least 2");
  if (datasets.empty()) throw Error("synth config: datasets must not be empty");
  for (const auto& d : datasets) parse_dataset(d);
  if (sc_samples > 1 && sc_reference >= M) throw Error("synth config: sc_reference out of range");
}

namespace {

using nlohmann::json;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// Converts key=value text into a JSON object so both formats share one reader.
json key_value_to_json(std::string_view text) {
  static const std::vector<std::string> list_keys = {"skills", "decoy_of", "overconfidence", "datasets"};
  json j = json::object();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("synth config line " + std::to_string(line_no) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const bool is_list = std::find(list_keys.begin(), list_keys.end(), key) != list_keys.end();
    if (key == "datasets") {
      j[key] = split_list(value);
    } else if (is_list) {
      json arr = json::array();
      for (const auto& v : split_list(value)) arr.push_back(parse_double(v));
      j[key] = arr;
    } else {
      try {
        std::size_t used = 0;
        const double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        j[key] = d;
      } catch (const std::exception&) {
        throw Error("synth config line " + std::to_string(line_no) + ": bad number '" + value + "'");
      }
    }
  }
  return j;
}

std::size_t as_count(const json& v, const std::string& key) {
  const double d = v.get<double>();
  if (!(d >= 0.0) || std::floor(d) != d) throw Error("synth config: " + key + " must be a non-negative integer");
  return static_cast<std::size_t>(d);
}

}  // namespace

SynthConfig parse_synth_config(std::string_view text, SynthConfig base) {
  const auto first = text.find_first_not_of(" \t\r\n");
  json j;
  if (first != std::string_view::npos && text[first] == '{') {
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(std::string("synth config: malformed JSON: ") + e.what());
    }
  } else {
    j = key_value_to_json(text);
  }
  SynthConfig c = std::move(base);
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "num_questions") c.num_questions = as_count(v, key);
      else if (key == "skills") c.skills = v.get<std::vector<double>>();
      else if (key == "decoy_of") {
        c.decoy_of.clear();
        for (const auto& d : v) c.decoy_of.push_back(as_count(d, key));
      } else if (key == "num_decoys") c.num_decoys = as_count(v, key);
      else if (key == "decoy_share") c.decoy_share = v.get<double>();
      else if (key == "numeric_fraction") c.numeric_fraction = v.get<double>();
      else if (key == "datasets") c.datasets = v.get<std::vector<std::string>>();
      else if (key == "dim") c.dim = as_count(v, key);
      else if (key == "sigma_truth") c.sigma_truth = v.get<double>();
      else if (key == "sigma_decoy") c.sigma_decoy = v.get<double>();
      else if (key == "overconfidence") c.overconfidence = v.get<std::vector<double>>();
      else if (key == "confidence_spread") c.confidence_spread = v.get<double>();
      else if (key == "verifier_separation") c.verifier_separation = v.get<double>();
      else if (key == "verifier_noise") c.verifier_noise = v.get<double>();
      else if (key == "invalid_rate") c.invalid_rate = v.get<double>();
      else if (key == "sc_samples") c.sc_samples = as_count(v, key);
      else if (key == "sc_reference") c.sc_reference = as_count(v, key);
      else if (key == "sc_slip") c.sc_slip = v.get<double>();
      else if (key == "seed") c.seed = v.is_number_unsigned() ? v.get<std::uint64_t>() : as_count(v, key);
      else throw Error("synth config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(std::string("synth config: bad value: ") + e.what());
  }
  // Lists sized for the default three models follow a changed model count.
  const auto M = c.skills.size();
  if (!j.contains("decoy_of") && c.decoy_of.size() != M) {
    c.decoy_of.assign(M, 0);
    if (M > 0) c.decoy_of[0] = c.num_decoys > 1 ? 1 : 0;
  }
  if (!j.contains("overconfidence") && c.overconfidence.size() != M) c.overconfidence.assign(M, 0.0);
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path, SynthConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_config(ss.str(), std::move(base));
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kFamilies[] = {"alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"};

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (auto& x : v) x /= n;
  return v;
}

std::vector<double> jitter(const std::vector<double>& center, double sigma, Rng& rng) {
  const double scale = sigma / std::sqrt(static_cast<double>(center.size()));
  std::vector<double> v(center.size());
  double n2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = center[i] + scale * rng.normal();
    n2 += v[i] * v[i];
  }
  const double n = std::sqrt(n2);
  for (auto& x : v) x /= n;
  return v;
}

const char* pick(Rng& rng, std::initializer_list<const char*> options) {
  return options.begin()[rng.below(options.size())];
}

std::string reasoning_text(Rng& rng) {
  const std::size_t steps = 2 + static_cast<std::size_t>(rng.below(3));
  std::string text;
  const std::vector<std::string> lines = {
      pick(rng, {"Identify the quantities given in the question.", "Read the question and list what is known.",
                 "Restate the problem in simpler terms."}),
      pick(rng, {"Combine the known values to approach the result.", "Work through the relationship between them.",
                 "Apply the relevant rule to the facts."}),
      pick(rng, {"Simplify the intermediate result.", "Compare the remaining candidates.",
                 "Carry the partial result forward."}),
      pick(rng, {"Therefore the result follows from the previous step.", "So the remaining option is the answer.",
                 "Thus the computation is complete."})};
  for (std::size_t s = 0; s < steps; ++s) text += "Step " + std::to_string(s + 1) + ": " + lines[s] + "\n";
  if (rng.bernoulli(0.3)) text += pick(rng, {"Let me check the result once more.\n", "I verify the result against the question.\n"});
  return text;
}

std::string format_numeric_final(double value, Rng& rng) {
  const auto v = static_cast<long long>(value);
  switch (rng.below(3)) {
    case 0: return std::to_string(v);
    case 1: return "$" + std::to_string(v);
    default: return std::to_string(v) + " units";
  }
}

std::string format_choice_final(char letter, Rng& rng) {
  switch (rng.below(3)) {
    case 0: return std::string(1, letter);
    case 1: return "(" + std::string(1, letter) + ")";
    default: return "option " + std::string(1, letter);
  }
}

struct QuestionPlan {
  QuestionRecord question;
  std::vector<double> truth;
  std::vector<std::vector<double>> decoy_centers;
  AnswerValue gold;
  std::vector<AnswerValue> decoy_values;
};

QuestionPlan plan_question(const SynthConfig& c, std::size_t index, Rng& rng) {
  QuestionPlan p;
  const Dataset dataset = parse_dataset(c.datasets[index % c.datasets.size()]);
  TaskKind kind = TaskKind::multiple_choice;
  if (dataset == Dataset::gsm8k) kind = TaskKind::numeric;
  if (dataset == Dataset::synthetic) kind = rng.bernoulli(c.numeric_fraction) ? TaskKind::numeric : TaskKind::multiple_choice;

  auto& q = p.question;
  char id[32];
  std::snprintf(id, sizeof id, "%s-%05zu", to_string(dataset).c_str(), index + 1);
  q.question_id = id;
  q.dataset = dataset;
  q.task_kind = kind;
  p.truth = random_unit(rng, c.dim);
  for (std::size_t d = 0; d < c.num_decoys; ++d) p.decoy_centers.push_back(random_unit(rng, c.dim));

  if (kind == TaskKind::numeric) {
    const double gold = static_cast<double>(10 + rng.below(990));
    q.question_text = "Synthetic arithmetic question " + std::to_string(index + 1) + ".";
    q.gold_answer = std::to_string(static_cast<long long>(gold));
    p.gold = gold;
    std::vector<double> used{gold};
    for (std::size_t d = 0; d < c.num_decoys; ++d) {
      double v;
      do {
        const double offset = static_cast<double>(1 + rng.below(20));
        v = rng.bernoulli(0.5) ? gold + offset : std::max(1.0, gold - offset);
      } while (std::find(used.begin(), used.end(), v) != used.end());
      used.push_back(v);
      p.decoy_values.push_back(v);
    }
  } else {
    const std::string letters = "ABCD";
    const char gold = letters[rng.below(4)];
    std::string wrong;
    for (const char l : letters)
      if (l != gold) wrong += l;
    rng.shuffle(wrong.begin(), wrong.end());
    q.question_text = "Synthetic multiple-choice question " + std::to_string(index + 1) + ".";
    q.gold_answer = std::string(1, gold);
    p.gold = gold;
    for (std::size_t d = 0; d < c.num_decoys; ++d) p.decoy_values.push_back(wrong[d % wrong.size()]);
    for (const char l : letters) {
      OptionEntry o;
      o.letter = l;
      o.text = l == gold ? "The supported statement." : "An alternative statement.";
      if (dataset == Dataset::truthfulqa) {
        if (l == std::get<char>(p.decoy_values[0]) && l != gold) {
          o.false_plausible = true;
          o.text = "A common misconception.";
        } else if (l == wrong.back() && l != std::get<char>(p.decoy_values[0])) {
          o.non_committal = true;
          o.text = "I have no comment.";
        }
      }
      q.options.push_back(std::move(o));
    }
  }
  return p;
}

struct Draw {
  bool valid = true;
  bool correct = false;
  std::size_t decoy = 0;
};

Draw draw_answer(const SynthConfig& c, std::size_t m, double latent, Rng& rng) {
  Draw d;
  d.valid = !rng.bernoulli(c.invalid_rate);
  d.correct = d.valid && rng.bernoulli(latent);
  d.decoy = rng.bernoulli(c.decoy_share) ? c.decoy_of[m] : static_cast<std::size_t>(rng.below(c.num_decoys));
  return d;
}

std::string response_text(const QuestionPlan& p, const Draw& d, Rng& rng) {
  std::string text = reasoning_text(rng);
  if (!d.valid) return text + "I am unable to settle on a single answer.";
  const AnswerValue& v = d.correct ? p.gold : p.decoy_values[d.decoy];
  if (const auto* x = std::get_if<double>(&v)) return text + "Final Answer: " + format_numeric_final(*x, rng);
  return text + "Final Answer: " + format_choice_final(std::get<char>(v), rng);
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  const std::size_t M = config.num_models();
  SynthCorpus out;
  out.embeddings = EmbeddingStore(config.dim);
  for (std::size_t m = 0; m < M; ++m) {
    ModelCatalogEntry e;
    e.family = kFamilies[m % std::size(kFamilies)];
    const int billions = m % 2 == 0 ? 7 : 8;
    e.model_id = e.family + "-" + std::to_string(billions) + "b";
    if (m >= std::size(kFamilies)) e.model_id += "-" + std::to_string(m);
    e.log_param_count = std::log(billions * 1e9);
    out.catalog.push_back(std::move(e));
  }

  for (std::size_t i = 0; i < config.num_questions; ++i) {
    auto rng = Rng::stream(config.seed, "synth.question." + std::to_string(i));
    auto plan = plan_question(config, i, rng);
    const auto& qid = plan.question.question_id;
    out.embeddings.put(qid, std::string(kQuestionEmbeddingModel), {random_unit(rng, config.dim), "synthetic"});

    for (std::size_t m = 0; m < M; ++m) {
      const double skill = config.skills[m];
      const double spread = std::min({config.confidence_spread, skill, 1.0 - skill});
      // Latent per-question competence; calibrated models report it as is.
      const double latent = rng.uniform(skill - spread, skill + spread);
      const std::size_t samples = (config.sc_samples > 1 && m == config.sc_reference) ? config.sc_samples : 1;
      bool canonical_correct = false;
      for (std::size_t s = 0; s < samples; ++s) {
        auto draw = draw_answer(config, m, latent, rng);
        if (s == 0) {
          canonical_correct = draw.correct;
        } else {
          draw.valid = true;
          draw.correct = canonical_correct && !rng.bernoulli(config.sc_slip);
        }
        ResponseRecord r;
        r.question_id = qid;
        r.model_id = out.catalog[m].model_id;
        r.sample_index = static_cast<int>(s);
        r.raw_text = response_text(plan, draw, rng);
        const double reported = std::clamp(latent + config.overconfidence[m], 0.01, 0.99);
        r.self_confidence_raw = format_fixed(reported, 2);
        r.mean_logprob = -0.2 - 0.6 * rng.uniform();
        std::array<double, 3> verifier{};
        for (auto& v : verifier) {
          const double centre = 0.5 + (draw.correct ? 0.5 : -0.5) * config.verifier_separation;
          v = std::clamp(centre + config.verifier_noise * rng.normal(), 0.0, 1.0);
        }
        r.verifier_scores = verifier;
        if (s == 0) {
          const auto emb = draw.correct ? jitter(plan.truth, config.sigma_truth, rng)
                                        : jitter(plan.decoy_centers[draw.decoy], config.sigma_decoy, rng);
          out.embeddings.put(qid, r.model_id, {emb, "synthetic"});
        }
        out.responses.push_back(std::move(r));
      }
    }
    out.questions.push_back(std::move(plan.question));
  }
  return out;
}

void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  write_corpus(dir, corpus.questions, corpus.responses, corpus.catalog, &corpus.embeddings);
}

double oracle_upper_bound(std::span<const std::vector<std::uint8_t>> correctness) {
  if (correctness.empty()) throw Error("oracle_upper_bound: no questions");
  double hits = 0.0;
  for (const auto& row : correctness)
    if (std::any_of(row.begin(), row.end(), [](std::uint8_t z) { return z != 0; })) hits += 1.0;
  return hits / static_cast<double>(correctness.size());
}

double oracle_upper_bound(const Corpus& corpus) {
  std::vector<std::vector<std::uint8_t>> rows;
  for (const auto& inst : corpus.instances) rows.push_back(inst.correctness);
  return oracle_upper_bound(rows);
}

double oracle_upper_bound(const FeatureSet& set, std::span<const std::size_t> records) {
  std::vector<std::vector<std::uint8_t>> rows;
  for (const auto r : records) rows.push_back(set.records[r].correctness);
  return oracle_upper_bound(rows);
}

}  // namespace mcre
