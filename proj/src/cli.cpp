#include "mcre/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcre/error.hpp"
#include "mcre/evaluation.hpp"
#include "mcre/format.hpp"
#include "mcre/json_io.hpp"
#include "mcre/pipeline.hpp"
#include "mcre/synthgen.hpp"

namespace mcre {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::optional<std::string> env(const char* name) {
  if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

std::uint64_t env_seed() {
  const auto v = env("MCRE_SEED");
  if (!v) return 0;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return s;
  } catch (const std::exception&) {
    throw UsageError("MCRE_SEED must be a non-negative integer, got '" + *v + "'");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

void write_run_json(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                    const std::string& manifest_hash) {
  json run = {{"command", command},
              {"config", config},
              {"config_hash", hex64(fnv1a64(config.dump()))},
              {"seed", seed},
              {"manifest_hash", manifest_hash},
              {"versions",
               {{"mcre", kVersion},
                {"corpus_schema", kCorpusSchemaVersion},
                {"feature_manifest", kFeatureManifestVersion},
                {"feature_set", kFeatureSetVersion},
                {"model_format", kModelFormatVersion}}}};
  write_json_file(dir / "run.json", run);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig config;
  config.seed = env_seed();
  if (!a.config.empty()) config = load_synth_config(a.config, config);
  if (a.seed) config.seed = *a.seed;
  config.validate();
  const auto corpus = generate_corpus(config);
  make_dir(a.out);
  write_synth_corpus(a.out, corpus);
  json cfg = {{"num_questions", config.num_questions}, {"skills", config.skills},
              {"decoy_of", config.decoy_of},           {"num_decoys", config.num_decoys},
              {"decoy_share", config.decoy_share},     {"numeric_fraction", config.numeric_fraction},
              {"datasets", config.datasets},           {"dim", config.dim},
              {"sigma_truth", config.sigma_truth},     {"sigma_decoy", config.sigma_decoy},
              {"overconfidence", config.overconfidence}, {"confidence_spread", config.confidence_spread},
              {"verifier_separation", config.verifier_separation}, {"verifier_noise", config.verifier_noise},
              {"invalid_rate", config.invalid_rate},   {"sc_samples", config.sc_samples},
              {"sc_reference", config.sc_reference}, {"sc_slip", config.sc_slip}};
  write_run_json(a.out, "synth", cfg, config.seed, "");
  out << "wrote " << corpus.questions.size() << " questions, " << corpus.responses.size() << " responses to "
      << a.out << '\n';
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string corpus;
  std::string out;
  std::optional<double> tau;
  std::optional<std::size_t> knn;
  std::string embed_url;
  std::optional<std::uint64_t> seed;
  std::vector<double> split{0.7, 0.1, 0.2};
};

void embed_missing(Corpus& corpus, const std::string& url) {
  EmbedServiceConfig svc;
  svc.url = url;
  std::vector<std::string> texts;
  std::vector<std::pair<std::size_t, std::size_t>> slots;  // (instance, model or SIZE_MAX for question)
  constexpr auto kQuestion = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    auto& inst = corpus.instances[i];
    for (std::size_t m = 0; m < inst.answers.size(); ++m) {
      if (inst.answers[m].embedding) continue;
      texts.push_back(inst.answers[m].response.raw_text);
      slots.emplace_back(i, m);
    }
    if (!inst.question_embedding) {
      texts.push_back(inst.question.question_text);
      slots.emplace_back(i, kQuestion);
    }
  }
  const auto vectors = fetch_embeddings(texts, svc);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    auto& inst = corpus.instances[slots[k].first];
    if (slots[k].second == kQuestion) {
      inst.question_embedding = vectors[k];
    } else {
      inst.answers[slots[k].second].embedding = vectors[k];
    }
  }
  corpus.has_embeddings = true;
}

void cmd_featurize(const FeaturizeArgs& a, std::ostream& out) {
  if (a.tau && a.knn) throw UsageError("--tau and --knn are mutually exclusive");
  if (a.split.size() != 3) throw UsageError("--split needs three fractions train,val,test");
  GraphConstruction graph;
  if (a.knn) {
    graph.kind = GraphConstruction::Kind::knn;
    graph.k = *a.knn;
  } else if (a.tau) {
    graph.tau = *a.tau;
  }
  const std::uint64_t seed = a.seed ? *a.seed : env_seed();
  auto corpus = load_corpus(a.corpus);
  if (!corpus.has_embeddings) {
    const std::string url = !a.embed_url.empty() ? a.embed_url : env("MCRE_EMBED_URL").value_or("");
    if (url.empty())
      throw Error("corpus " + a.corpus + " has no embeddings and no embedding service was given (--embed-url or MCRE_EMBED_URL)");
    embed_missing(corpus, url);
  }
  const SplitRatios ratios{a.split[0], a.split[1], a.split[2]};
  const auto set = build_feature_set(std::move(corpus), graph, seed, ratios);
  make_dir(a.out);
  save_feature_set(fs::path(a.out) / "features.json", set);
  auto manifest = manifest_to_json(set.manifest);
  manifest["graph"] = graph_construction_to_json(set.graph);
  write_json_file(fs::path(a.out) / "feature_manifest.json", manifest);
  std::string graphs;
  for (const auto& r : set.records) graphs += "# " + r.question.question_id + "\n" + dump_edges(r.graph);
  write_text(fs::path(a.out) / "graphs.txt", graphs);
  write_run_json(a.out, "featurize",
                 {{"corpus", fs::path(a.corpus).filename().string()},
                  {"graph", graph_construction_to_json(graph)},
                  {"split", a.split}},
                 seed, set.manifest.hash);
  out << "featurized " << set.records.size() << " questions (" << set.manifest.dim() << " features, "
      << graph.describe() << ") into " << a.out << '\n';
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string features;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  double lr = 1e-3;
  std::size_t batch = 64;
  int epochs = 50;
  int patience = 5;
  int rounds = 500;
  int gbdt_patience = 20;
  std::vector<std::string> blocks;
};

ModelOptions model_options(const TrainArgs& a, std::uint64_t seed) {
  if (!(a.lr > 0.0) || a.batch == 0 || a.epochs <= 0) throw UsageError("learning rate, batch size and epochs must be positive");
  ModelOptions o;
  o.train.learning_rate = a.lr;
  o.train.batch_size = a.batch;
  o.train.max_epochs = a.epochs;
  o.train.patience = a.patience;
  o.train.seed = seed;
  o.gbdt.max_rounds = a.rounds;
  o.gbdt.patience = a.gbdt_patience;
  o.forest.seed = seed;
  if (!a.blocks.empty()) {
    o.blocks.clear();
    for (const auto& b : a.blocks) o.blocks.push_back(parse_feature_block(b));
  }
  return o;
}

json options_json(const TrainArgs& a, const ModelOptions& o) {
  json blocks = json::array();
  for (const auto b : o.blocks) blocks.push_back(to_string(b));
  return {{"model", a.model},         {"learning_rate", o.train.learning_rate}, {"batch_size", o.train.batch_size},
          {"max_epochs", o.train.max_epochs}, {"patience", o.train.patience}, {"gbdt_rounds", o.gbdt.max_rounds},
          {"gbdt_patience", o.gbdt.patience}, {"blocks", blocks}};
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto kind = parse_model_kind(a.model);
  const std::uint64_t seed = a.seed ? *a.seed : env_seed();
  const auto options = model_options(a, seed);
  const auto set = load_feature_set(a.features);
  const auto model = train_model(set, kind, options);
  make_dir(a.out);
  save_model(fs::path(a.out) / "model.json", model);
  write_text(fs::path(a.out) / "history.csv", history_csv(model.history));
  if (kind == ModelKind::gbdt || kind == ModelKind::rank || kind == ModelKind::rf) {
    std::string csv = "feature,gain\n";
    for (const auto& [name, gain] : feature_importance(model, set.manifest)) csv += name + "," + format_double(gain) + "\n";
    write_text(fs::path(a.out) / "importance.csv", csv);
  }
  write_run_json(a.out, "train", options_json(a, options), seed, set.manifest.hash);
  out << "trained " << to_string(kind) << " -> " << (fs::path(a.out) / "model.json").string() << '\n';
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string features;
  std::vector<std::string> models;
  bool baselines = false;
  std::string report_dir;
  std::string reference = kBestSingleName;
  std::size_t resamples = 10000;
  std::optional<std::uint64_t> seed;
  std::string sc_reference;
};

std::size_t resolve_model_index(const FeatureSet& set, const std::string& name) {
  if (name.empty()) return 0;
  for (std::size_t m = 0; m < set.catalog.size(); ++m)
    if (set.catalog[m].model_id == name) return m;
  throw UsageError("unknown self-consistency reference model '" + name + "'");
}

/// Accepts a full method label or a short alias such as best_single or gat.
std::string resolve_reference(const std::string& name) {
  static const std::map<std::string, std::string> aliases = {{"best_single", kBestSingleName},
                                                             {"random", kRandomName},
                                                             {"majority", kMajorityName},
                                                             {"majority_vote", kMajorityName},
                                                             {"self_consistency", kSelfConsistencyName}};
  if (const auto it = aliases.find(name); it != aliases.end()) return it->second;
  for (const auto& kind : model_kind_names())
    if (kind == name) return method_label(parse_model_kind(kind));
  return name;
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.resamples < 1000) throw UsageError("--resamples must be at least 1000");
  const std::uint64_t seed = a.seed ? *a.seed : env_seed();
  const auto set = load_feature_set(a.features);
  const auto test = set.indices(Split::test);
  if (test.empty()) throw Error("test split is empty");

  std::vector<MethodOutcomes> methods;
  if (a.baselines || a.models.empty()) {
    BaselineOptions bo;
    bo.seed = seed;
    bo.self_consistency_reference = resolve_model_index(set, a.sc_reference);
    methods = run_baselines(set, test, bo);
  }
  std::vector<std::pair<std::string, TrainHistory>> histories;
  for (const auto& path : a.models) {
    const auto model = load_model(path, set.manifest.hash);
    auto name = method_label(model.kind);
    methods.push_back(outcomes_from_probabilities(name, set, test, predict(model, set, test)));
    histories.emplace_back(name, model.history);
  }
  EvalConfig ec;
  ec.seed = seed;
  ec.resamples = a.resamples;
  ec.reference = resolve_reference(a.reference);
  const bool have_reference = std::any_of(methods.begin(), methods.end(),
                                          [&](const MethodOutcomes& m) { return m.name == ec.reference; });
  if (!have_reference) {
    if (ec.reference != kBestSingleName) throw UsageError("bootstrap reference '" + a.reference + "' is not among the evaluated methods");
    ec.reference.clear();
  }
  const auto report = summarize(set, methods, ec);
  emit_report(a.report_dir, report, histories);
  json model_names = json::array();
  for (const auto& m : a.models) model_names.push_back(fs::path(m).parent_path().filename().string() + "/" +
                                                       fs::path(m).filename().string());
  write_run_json(a.report_dir, "eval",
                 {{"models", model_names}, {"baselines", a.baselines || a.models.empty()},
                  {"reference", ec.reference}, {"resamples", ec.resamples}},
                 seed, set.manifest.hash);
  out << "evaluated " << methods.size() << " methods on " << test.size() << " test questions -> " << a.report_dir << '\n';
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string features;
  std::string model = "gbdt";
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const auto kind = parse_model_kind(a.model);
  const std::uint64_t seed = a.seed ? *a.seed : env_seed();
  const auto rows = a.spec.empty() ? default_ablation_rows() : parse_ablation_spec(read_json_file(a.spec));
  const auto set = load_feature_set(a.features);
  TrainArgs defaults;
  defaults.model = a.model;
  const auto options = model_options(defaults, seed);
  const auto results = run_ablation(set, kind, options, rows);
  make_dir(a.out);
  write_text(fs::path(a.out) / "table2.csv", table2_csv(results));
  write_text(fs::path(a.out) / "table2.md", table2_markdown(results));
  json spec = json::array();
  for (const auto& r : rows) {
    json blocks = json::array();
    for (const auto b : r.blocks) blocks.push_back(to_string(b));
    spec.push_back({{"label", r.label}, {"blocks", blocks}});
  }
  write_run_json(a.out, "ablate", {{"model", a.model}, {"rows", spec}}, seed, set.manifest.hash);
  out << table2_markdown(results);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Supervised multi-model consensus engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic corpus");
  s->add_option("--config", synth.config, "Synthetic corpus config (JSON or key = value)")->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "Output corpus directory")->required();
  s->add_option("--seed", synth.seed, "Seed (overrides the config file and MCRE_SEED)");

  FeaturizeArgs feat;
  auto* f = app.add_subcommand("featurize", "Extract features and answer graphs");
  f->set_config("--config");
  f->add_option("--corpus", feat.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  f->add_option("--out", feat.out, "Output directory")->required();
  f->add_option("--tau", feat.tau, "Similarity threshold graph (default 0.7)");
  f->add_option("--knn", feat.knn, "k-nearest-neighbour graph instead of a threshold");
  f->add_option("--embed-url", feat.embed_url, "Embedding service for corpora without embeddings");
  f->add_option("--seed", feat.seed, "Split seed");
  f->add_option("--split", feat.split, "Train,val,test fractions")->delimiter(',')->expected(3);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a consensus meta-model");
  t->set_config("--config");
  t->add_option("--features", train.features, "features.json from featurize")->required()->check(CLI::ExistingFile);
  t->add_option("--model", train.model, "logreg, gbdt, mlp, rank, gcn, gat, gating or rf")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--seed", train.seed, "Seed");
  t->add_option("--lr", train.lr, "Adam learning rate");
  t->add_option("--batch-size", train.batch, "Mini-batch size");
  t->add_option("--epochs", train.epochs, "Maximum epochs");
  t->add_option("--patience", train.patience, "Early-stopping patience in epochs");
  t->add_option("--rounds", train.rounds, "Maximum boosting rounds");
  t->add_option("--gbdt-patience", train.gbdt_patience, "Early-stopping patience in boosting rounds");
  t->add_option("--blocks", train.blocks, "Feature blocks to use")->delimiter(',');

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate models and baselines on the test split");
  e->set_config("--config");
  e->add_option("--features", ev.features, "features.json from featurize")->required()->check(CLI::ExistingFile);
  e->add_option("--model,--models", ev.models, "Trained model files")->delimiter(',')->check(CLI::ExistingFile);
  e->add_flag("--baselines", ev.baselines, "Include the four baselines");
  e->add_option("--report-dir", ev.report_dir, "Report directory")->required();
  e->add_option("--bootstrap-reference", ev.reference, "Reference method for paired bootstrap");
  e->add_option("--resamples", ev.resamples, "Bootstrap resamples");
  e->add_option("--seed", ev.seed, "Seed for tie-breaking, random baseline and bootstrap");
  e->add_option("--sc-reference", ev.sc_reference, "Model id used for self-consistency");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Feature-block ablation");
  a->set_config("--config");
  a->add_option("--features", ab.features, "features.json from featurize")->required()->check(CLI::ExistingFile);
  a->add_option("--model", ab.model, "Model kind (default gbdt)");
  a->add_option("--spec", ab.spec, "Custom ablation spec (JSON)")->check(CLI::ExistingFile);
  a->add_option("--out", ab.out, "Output directory")->required();
  a->add_option("--seed", ab.seed, "Seed");

  std::vector<const char*> argv{"mcre"};
  for (const auto& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  }

  try {
    set_thread_limit(threads);
    if (s->parsed()) cmd_synth(synth, out);
    if (f->parsed()) cmd_featurize(feat, out);
    if (t->parsed()) cmd_train(train, out);
    if (e->parsed()) cmd_eval(ev, out);
    if (a->parsed()) cmd_ablate(ab, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mcre
