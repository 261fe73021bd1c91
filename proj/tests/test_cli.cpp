#include <doctest.h>

#include <sstream>

#include "mcre/cli.hpp"
#include "mcre/error.hpp"
#include "support.hpp"

using namespace mcre;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(oracle::read_text(p)); }

/// A small corpus plus default features, built once for the whole file.
struct Workspace {
  fs::path root = oracle::scratch_dir("cli");
  fs::path corpus = root / "corpus";
  fs::path features = root / "feat";

  Workspace() {
    std::ofstream(root / "synth.cfg") << "num_questions = 160\ndatasets = gsm8k, arc, hellaswag, truthfulqa\n";
    const auto s = cli({"synth", "--config", (root / "synth.cfg").string(), "--out", corpus.string(), "--seed", "4"});
    REQUIRE(s.code == 0);
    const auto f = cli({"featurize", "--corpus", corpus.string(), "--out", features.string(), "--seed", "4"});
    REQUIRE(f.code == 0);
  }
  std::string features_json() const { return (features / "features.json").string(); }
};

const Workspace& workspace() {
  static const Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  const auto missing_out = cli({"synth"});
  CHECK(missing_out.code == 2);
  CHECK(missing_out.err.find("--out") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);

  const auto& w = workspace();
  const auto bogus = cli({"train", "--features", w.features_json(), "--model", "bogus", "--out",
                          (w.root / "bogus").string()});
  CHECK(bogus.code == 2);
  for (const auto& kind : model_kind_names()) CHECK(bogus.err.find(kind) != std::string::npos);
  CHECK_THROWS_AS(parse_model_kind("bogus"), UsageError);

  CHECK(cli({"featurize", "--corpus", w.corpus.string(), "--out", (w.root / "x").string(), "--tau", "0.5", "--knn",
             "2"}).code == 2);
  CHECK(cli({"eval", "--features", w.features_json(), "--report-dir", (w.root / "r").string(), "--resamples", "10"})
            .code == 2);
}

TEST_CASE("featurize records the graph construction") {
  const auto& w = workspace();
  const auto manifest = read_json(w.features / "feature_manifest.json");
  CHECK(manifest.at("graph").at("kind") == "threshold");
  CHECK(manifest.at("graph").at("tau").get<double>() == 0.7);
  const auto run = read_json(w.features / "run.json");
  CHECK(run.at("command") == "featurize");
  CHECK(run.at("seed") == 4);
  CHECK(fs::exists(w.features / "graphs.txt"));

  const auto knn = cli({"featurize", "--corpus", w.corpus.string(), "--out", (w.root / "knn").string(), "--knn", "2"});
  REQUIRE(knn.code == 0);
  const auto km = read_json(w.root / "knn" / "feature_manifest.json");
  CHECK(km.at("graph").at("kind") == "knn");
  CHECK(km.at("graph").at("k") == 2);
}

TEST_CASE("featurize without embeddings needs a service") {
  const auto& w = workspace();
  const auto bare = w.root / "bare";
  fs::create_directories(bare);
  for (const char* f : {"questions.jsonl", "responses.jsonl", "models.json"}) fs::copy_file(w.corpus / f, bare / f);
  unsetenv("MCRE_EMBED_URL");
  const auto r = cli({"featurize", "--corpus", bare.string(), "--out", (w.root / "bare_feat").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("no embeddings") != std::string::npos);
}

TEST_CASE("train gat records the architecture") {
  const auto& w = workspace();
  const auto out = w.root / "gat";
  const auto r = cli({"train", "--features", w.features_json(), "--model", "gat", "--out", out.string(), "--epochs",
                      "3", "--seed", "1"});
  REQUIRE(r.code == 0);
  const auto model = read_json(out / "model.json");
  CHECK(model.at("architecture").at("layers") == 2);
  CHECK(model.at("architecture").at("heads") == 4);
  CHECK(fs::exists(out / "history.csv"));
  CHECK(read_json(out / "run.json").at("config").at("model") == "gat");
}

TEST_CASE("feature set and model json round-trips") {
  const auto& w = workspace();
  const auto set = load_feature_set(w.features_json());
  const auto again = feature_set_from_json(feature_set_to_json(set));
  CHECK(feature_set_to_json(again).dump() == feature_set_to_json(set).dump());
  CHECK(again.records.size() == 160);

  ModelOptions o;
  o.train.max_epochs = 2;
  const auto model = train_model(set, ModelKind::mlp, o);
  const auto copy = model_from_json(model_to_json(model));
  const auto test = set.indices(Split::test);
  const auto p = predict(model, set, test);
  const auto q = predict(copy, set, test);
  REQUIRE(p.size() == q.size());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK((p[i] - q[i]).cwiseAbs().maxCoeff() == 0.0);

  const auto path = w.root / "mlp.json";
  save_model(path, model);
  CHECK_NOTHROW(load_model(path, set.manifest.hash));
  CHECK_THROWS_AS(load_model(path, "0000000000000000"), Error);
}

TEST_CASE("eval with baselines only") {
  const auto& w = workspace();
  const auto dir = w.root / "eval_baselines";
  const auto r = cli({"eval", "--features", w.features_json(), "--baselines", "--report-dir", dir.string(),
                      "--bootstrap-reference", "best_single", "--resamples", "1000"});
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(oracle::read_text(dir / "table1.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].front() == "method");
  CHECK(rows[0].back() == "macro");
  std::vector<std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i) names.push_back(rows[i][0]);
  for (const char* n : {kRandomName, kMajorityName, kSelfConsistencyName, kBestSingleName})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK(read_json(dir / "run.json").at("config").at("reference") == kBestSingleName);

  const auto bad = cli({"eval", "--features", w.features_json(), "--baselines", "--report-dir",
                        (w.root / "eval_bad").string(), "--bootstrap-reference", "gat"});
  CHECK(bad.code == 2);
}

TEST_CASE("ablate writes six rows") {
  const auto& w = workspace();
  const auto dir = w.root / "ablate";
  const auto r = cli({"ablate", "--features", w.features_json(), "--model", "logreg", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = parse_csv(oracle::read_text(dir / "table2.csv"));
  CHECK(rows.size() == 7);
  CHECK(fs::exists(dir / "table2.md"));
}
