// Acceptance harness: one PASS/FAIL line per criterion, exit code 1 if any fail.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mcre/cli.hpp"
#include "mcre/embedding.hpp"
#include "mcre/error.hpp"
#include "../support.hpp"

using namespace mcre;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1 -----------------------------------------------------------------------

Verdict metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = oracle::metric_fixture();
  const std::vector<MethodOutcomes> methods = {outcomes_from_probabilities("fixture", f.set, f.records, f.probabilities)};
  EvalConfig cfg;
  cfg.reference.clear();
  const auto report = summarize(f.set, methods, cfg);
  const auto& s = report.methods.at(0);
  const auto& dm = s.per_dataset.at(Dataset::truthfulqa);
  double worst = std::max({std::abs(dm.accuracy - f.accuracy), std::abs(dm.mrr - f.mrr), std::abs(dm.brier - f.brier)});
  bool ok = s.false_plausible.has_value();
  if (ok) worst = std::max(worst, std::abs(*s.false_plausible - f.false_plausible));
  std::size_t total = 0;
  for (const auto& b : s.reliability) total += b.count;
  ok = ok && total == f.records.size();
  for (const auto& [b, count, conf, acc] : f.bins) {
    ok = ok && s.reliability[b].count == count;
    worst = std::max({worst, std::abs(s.reliability[b].mean_confidence - conf), std::abs(s.reliability[b].accuracy - acc)});
  }
  const double secs = seconds_since(t0);
  return {ok && worst <= 1e-12 && secs < 1.0, "max error " + fmt("%.3g", worst) + ", " + fmt("%.3f", secs) + " s"};
}

// --- 2 -----------------------------------------------------------------------

Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = oracle::gradient_suite(2024, 5, 400);
  std::string detail;
  bool ok = true;
  for (const auto& r : reports) {
    ok = ok && r.worst() <= 1e-4 && r.errors.size() == 5;
    detail += r.model + " " + fmt("%.2g", r.worst());
    if (r.redrawn) detail += " (" + std::to_string(r.redrawn) + " kinked points redrawn)";
    detail += ", ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 30.0, detail + fmt("%.1f", secs) + " s"};
}

// --- 3 -----------------------------------------------------------------------

Verdict gcn_dense() {
  auto rng = Rng::stream(3, "acceptance.gcn");
  const GcnShape shape{6, 64};
  const auto layout = gcn_layout(shape);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<GraphSample> one = {oracle::random_graph_sample(1 + rng.below(6), 6, rng)};
    const auto p = oracle::jittered_init(layout, rng);
    const auto got = gcn_forward(shape, p, make_graph_batch(one));
    const auto& s = layout.segments();
    const Eigen::MatrixXd w1 = Eigen::Map<const Eigen::MatrixXd>(p.data() + s[0].offset, 6, 64);
    const Eigen::MatrixXd w2 = Eigen::Map<const Eigen::MatrixXd>(p.data() + s[1].offset, 64, 64);
    const Eigen::VectorXd wo = Eigen::Map<const Eigen::VectorXd>(p.data() + s[2].offset, 64);
    const auto want = oracle::dense_gcn(oracle::dense_normalized_adjacency(one[0].graph), one[0].features, w1, w2, wo,
                                        p[s[3].offset]);
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-6, "20 graphs, max |diff| " + fmt("%.3g", worst)};
}

// --- 4 -----------------------------------------------------------------------

std::vector<EmbeddingVector> clustered_points(std::size_t n, std::size_t dim, Rng& rng) {
  const std::size_t groups = 1 + rng.below(3);
  std::vector<std::vector<double>> centers(groups, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& x : c) x = rng.normal();
  std::vector<EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[rng.below(groups)];
    EmbeddingVector v;
    for (std::size_t k = 0; k < dim; ++k) v.values.push_back(c[k] + 0.4 * rng.normal());
    out.push_back(std::move(v));
  }
  return out;
}

Verdict clustering() {
  auto rng = Rng::stream(4, "acceptance.cluster");
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(7);
    const auto sim = build_similarity_matrix(clustered_points(n, 2 + rng.below(4), rng));
    const auto d = cosine_distance(sim);
    for (std::size_t k = 1; k <= n; ++k) {
      std::vector<MergeStep> trace;
      const auto got = agglomerative_cluster(d, k, &trace);
      std::vector<std::size_t> labels;
      const auto want = oracle::lance_williams_average(d, k, &labels);
      bool same = trace.size() == want.size() && got.cluster_id == labels;
      for (std::size_t s = 0; same && s < want.size(); ++s)
        same = trace[s].left == want[s].left && trace[s].right == want[s].right;
      mismatches += !same;
    }
    mismatches += select_k_silhouette(sim) != oracle::select_k(sim.values);
  }
  return {mismatches == 0, "100 instances, " + std::to_string(mismatches) + " mismatches"};
}

// --- 5 -----------------------------------------------------------------------

Verdict baseline_contracts() {
  const auto counts = oracle::three_way_tie_counts(5, 10000);
  const double chi = oracle::chi_square_uniform(counts);
  bool ok = chi < oracle::chi_square_critical_01(2);

  const std::vector<std::pair<double, double>> rounding = {{2.5, 3}, {-2.5, -3}, {0.5, 1}, {-0.5, -1}, {3.49, 3}};
  for (const auto& [x, want] : rounding) ok = ok && std::get<double>(voting_key(x)) == want;

  // Self-consistency over every 4-sample vector from a small alphabet.
  const std::vector<AnswerValue> alphabet = {7.0, 8.0, 7.4, 9.0};
  auto rng = Rng::stream(5, "acceptance.sc");
  std::size_t mismatches = 0;
  for (std::size_t code = 0; code < 256; ++code) {
    FeatureRecord rec;
    rec.question.question_id = "q";
    auto& samples = rec.samples[0];
    for (std::size_t k = 0, c = code; k < 4; ++k, c /= 4) samples.push_back(alphabet[c % 4]);
    const auto want = oracle::plurality_set(samples);
    const auto got = self_consistency(rec, 0, rng);
    mismatches += std::find(want.begin(), want.end(), got.winner) == want.end();
  }
  ok = ok && mismatches == 0;
  return {ok, "tie chi2 " + fmt("%.3f", chi) + " (critical " + fmt("%.3f", oracle::chi_square_critical_01(2)) +
                  "), self-consistency mismatches " + std::to_string(mismatches)};
}

// --- 6, 7, 8 -----------------------------------------------------------------

struct EndToEnd {
  FeatureSet set;
  EvalReport report;
  double oracle_bound = 0;
  std::map<std::string, double> accuracy;
  std::map<std::string, double> brier;
  std::vector<AblationResult> ablation;
  double seconds = 0;
};

double pooled_accuracy(const MethodOutcomes& m) {
  double hits = 0;
  for (const auto& o : m.outcomes) hits += o.correct;
  return hits / static_cast<double>(m.outcomes.size());
}

double pooled_brier(const MethodOutcomes& m) {
  double sum = 0;
  for (const auto& o : m.outcomes) sum += (o.probability - (o.correct ? 1.0 : 0.0)) * (o.probability - (o.correct ? 1.0 : 0.0));
  return sum / static_cast<double>(m.outcomes.size());
}

const EndToEnd& end_to_end() {
  static const EndToEnd e2e = [] {
    const auto t0 = std::chrono::steady_clock::now();
    EndToEnd e;
    SynthConfig cfg;
    cfg.num_questions = 2750;
    cfg.datasets = {"gsm8k", "arc", "hellaswag", "truthfulqa"};
    cfg.seed = 7;
    e.set = oracle::synthetic_feature_set(cfg, "acceptance_e2e", 7, {0.72727272727, 0.0909090909, 0.18181818182});
    const auto test = e.set.indices(Split::test);
    e.oracle_bound = oracle_upper_bound(e.set, test);

    BaselineOptions bo;
    bo.seed = 7;
    auto methods = run_baselines(e.set, test, bo);
    ModelOptions options;
    options.train.seed = 7;
    options.forest.seed = 7;
    for (const auto kind : {ModelKind::gbdt, ModelKind::gat}) {
      const auto model = train_model(e.set, kind, options);
      methods.push_back(outcomes_from_probabilities(method_label(kind), e.set, test, predict(model, e.set, test)));
    }
    for (const auto& m : methods) {
      e.accuracy[m.name] = pooled_accuracy(m);
      e.brier[m.name] = pooled_brier(m);
    }
    EvalConfig ec;
    ec.seed = 7;
    e.report = summarize(e.set, methods, ec);
    e.ablation = run_ablation(e.set, ModelKind::gbdt, options, default_ablation_rows());
    e.seconds = seconds_since(t0);
    return e;
  }();
  return e2e;
}

Verdict consensus_beats_vote() {
  const auto& e = end_to_end();
  const double mv = e.accuracy.at(kMajorityName);
  const double gbdt = e.accuracy.at(method_label(ModelKind::gbdt));
  const double gat = e.accuracy.at(method_label(ModelKind::gat));
  const bool sizes = e.set.indices(Split::train).size() == 2000 && e.set.indices(Split::test).size() == 500;
  const bool ok = sizes && gbdt - mv >= 0.10 && gat - mv >= 0.10 && e.oracle_bound - gbdt <= 0.10 &&
                  e.oracle_bound - gat <= 0.10 && e.seconds < 300.0;
  return {ok, "majority " + fmt("%.1f", 100 * mv) + ", GBDT " + fmt("%.1f", 100 * gbdt) + ", GAT " +
                  fmt("%.1f", 100 * gat) + ", oracle " + fmt("%.1f", 100 * e.oracle_bound) + ", " +
                  fmt("%.0f", e.seconds) + " s"};
}

Verdict calibration_direction() {
  const auto& e = end_to_end();
  const double gat = e.brier.at(method_label(ModelKind::gat));
  const double best = e.brier.at(kBestSingleName);
  return {gat <= best, "Brier GAT " + fmt("%.4f", gat) + " vs best single " + fmt("%.4f", best)};
}

Verdict ablation_sign() {
  const auto& e = end_to_end();
  const double full = e.ablation.at(0).macro_accuracy;
  const double no_sem = e.ablation.at(1).macro_accuracy;
  return {no_sem < full, "macro full " + fmt("%.1f", 100 * full) + ", without semantic/clustering " +
                             fmt("%.1f", 100 * no_sem)};
}

// --- 9 -----------------------------------------------------------------------

Verdict standardizer() {
  auto rng = Rng::stream(9, "acceptance.std");
  Eigen::MatrixXd x(400, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 5 * rng.normal() - 2;
    x(i, 1) = std::exp(2 * rng.normal());
    x(i, 2) = 1.5;
    x(i, 3) = static_cast<double>(rng.below(7));
  }
  const auto st = fit_standardizer(x, {false, false, false, false});
  const auto z = apply_standardizer(st, x);
  double worst_mean = 0, worst_var = 0;
  for (Eigen::Index j : {0, 1, 3}) {
    const double mean = z.col(j).mean();
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_var = std::max(worst_var, std::abs((z.col(j).array() - mean).square().mean() - 1.0));
  }
  // Clip bounds ignore rows outside training.
  Eigen::MatrixXd with_outliers(x.rows() + 2, 4);
  with_outliers << x, Eigen::RowVector4d(1e9, 1e9, 1.5, 1e9), Eigen::RowVector4d(-1e9, -1e9, 1.5, -1e9);
  const auto polluted = fit_standardizer(with_outliers, {false, false, false, false});
  const auto refit = fit_standardizer(x, {false, false, false, false});
  const bool train_only = refit.clip_high == st.clip_high && polluted.clip_high != st.clip_high;
  const bool ok = worst_mean <= 1e-9 && worst_var <= 1e-6 && z.col(2).cwiseAbs().maxCoeff() == 0.0 && train_only;
  return {ok, "max |mean| " + fmt("%.2g", worst_mean) + ", max |var-1| " + fmt("%.2g", worst_var)};
}

// --- 10 ----------------------------------------------------------------------

int quiet_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

bool pipeline_run(const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  std::ofstream(root / "synth.cfg") << "num_questions = 300\ndatasets = gsm8k, arc\n";
  const auto c = (root / "corpus").string(), f = (root / "feat").string();
  const auto features = (root / "feat" / "features.json").string();
  return quiet_cli({"synth", "--config", (root / "synth.cfg").string(), "--out", c, "--seed", "13"}) == 0 &&
         quiet_cli({"featurize", "--corpus", c, "--out", f, "--seed", "13"}) == 0 &&
         quiet_cli({"train", "--features", features, "--model", "gat", "--out", (root / "gat").string(), "--seed",
                    "13", "--epochs", "10"}) == 0 &&
         quiet_cli({"train", "--features", features, "--model", "gbdt", "--out", (root / "gbdt").string(), "--seed",
                    "13"}) == 0 &&
         quiet_cli({"eval", "--features", features, "--baselines", "--model",
                    (root / "gat" / "model.json").string() + "," + (root / "gbdt" / "model.json").string(),
                    "--report-dir", (root / "report").string(), "--seed", "13", "--resamples", "2000"}) == 0;
}

Verdict determinism() {
  const auto a = oracle::scratch_dir("acceptance_det_a"), b = oracle::scratch_dir("acceptance_det_b");
  if (!pipeline_run(a) || !pipeline_run(b)) return {false, "pipeline failed"};
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    ++compared;
    differing += oracle::read_text(entry.path()) != oracle::read_text(b / rel);
  }
  fs::remove_all(a);
  fs::remove_all(b);
  return {compared > 10 && differing == 0,
          std::to_string(compared) + " files compared, " + std::to_string(differing) + " differ"};
}

// --- 11 ----------------------------------------------------------------------

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

void write_bytes(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes; }

Verdict round_trips() {
  const auto dir = oracle::scratch_dir("acceptance_formats");
  auto rng = Rng::stream(11, "acceptance.emb");
  EmbeddingStore store(8);
  for (int q = 0; q < 20; ++q)
    for (const char* m : {"a", "b", "c"}) {
      std::vector<double> v(8);
      for (auto& x : v) x = static_cast<float>(rng.normal());  // binary payload is f32
      store.put("q" + std::to_string(q), m, {v, "test"});
    }
  const auto bin = dir / "embeddings.bin";
  write_embedding_file(store, bin);
  const auto back = load_embedding_file(bin);
  bool emb_ok = back.count() == store.count();
  for (const auto& [key, vec] : store.rows()) {
    const auto* got = back.find(key.first, key.second);
    emb_ok = emb_ok && got && got->values == vec.values;
  }

  const std::string good = oracle::read_text(bin);
  const std::vector<std::pair<std::string, std::string>> corruptions = {
      {"X" + good.substr(1), "bad magic"},
      {good.substr(0, 4) + '\x02' + good.substr(5), "unsupported version"},
      {good.substr(0, good.size() - 4), "truncated"},
      {good.substr(0, 10), "truncated"},
      {good + std::string(4, '\0'), "dimension mismatch"}};
  std::size_t rejected = 0;
  for (const auto& [bytes, message] : corruptions) {
    write_bytes(bin, bytes);
    rejected += error_of([&] { load_embedding_file(bin); }).find(message) != std::string::npos;
  }

  const auto csv = oracle::report_round_trip(end_to_end().report, dir / "report");
  fs::remove_all(dir);
  const bool ok = emb_ok && rejected == corruptions.size() && csv.ok();
  return {ok, "embeddings " + std::string(emb_ok ? "exact" : "differ") + ", " + std::to_string(rejected) + "/" +
                  std::to_string(corruptions.size()) + " corrupt headers rejected, " + std::to_string(csv.checked) +
                  " csv values, " + std::to_string(csv.mismatched) + " mismatched"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"metric oracles", metric_oracles},
      {"gradient correctness", gradients},
      {"GCN dense oracle", gcn_dense},
      {"clustering oracle", clustering},
      {"baseline contracts", baseline_contracts},
      {"synthetic end-to-end", consensus_beats_vote},
      {"calibration direction", calibration_direction},
      {"ablation sign", ablation_sign},
      {"standardizer", standardizer},
      {"determinism", determinism},
      {"format round-trips", round_trips},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s criterion %zu: %s (%s)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
