#include "mcre/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "mcre/baselines.hpp"
#include "mcre/error.hpp"
#include "mcre/format.hpp"
#include "parallel.hpp"

namespace mcre {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double accuracy(std::span<const std::uint8_t> correct) {
  if (correct.empty()) throw Error("accuracy: empty test set");
  double hits = 0.0;
  for (const auto c : correct) hits += c ? 1.0 : 0.0;
  return hits / static_cast<double>(correct.size());
}

std::vector<std::size_t> rank_by_probability(const Eigen::VectorXd& probabilities) {
  std::vector<std::size_t> order(static_cast<std::size_t>(probabilities.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probabilities[static_cast<Eigen::Index>(a)] > probabilities[static_cast<Eigen::Index>(b)];
  });
  return order;
}

double reciprocal_rank(std::span<const std::size_t> ranking, std::span<const std::uint8_t> correctness) {
  for (std::size_t pos = 0; pos < ranking.size(); ++pos)
    if (correctness[ranking[pos]]) return 1.0 / static_cast<double>(pos + 1);
  return 0.0;
}

double mrr(std::span<const std::vector<std::size_t>> rankings, std::span<const std::vector<std::uint8_t>> correctness) {
  if (rankings.empty()) throw Error("mrr: empty test set");
  if (rankings.size() != correctness.size()) throw Error("mrr: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) sum += reciprocal_rank(rankings[i], correctness[i]);
  return sum / static_cast<double>(rankings.size());
}

double brier(std::span<const double> probabilities, std::span<const std::uint8_t> correct) {
  if (probabilities.empty()) throw Error("brier: empty test set");
  if (probabilities.size() != correct.size()) throw Error("brier: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double gap = probabilities[i] - (correct[i] ? 1.0 : 0.0);
    sum += gap * gap;
  }
  return sum / static_cast<double>(probabilities.size());
}

std::vector<ReliabilityBin> reliability_diagram(std::span<const double> probabilities,
                                                std::span<const std::uint8_t> correct, std::size_t bins) {
  if (probabilities.size() != correct.size()) throw Error("reliability: length mismatch");
  std::vector<ReliabilityBin> out(bins);
  std::vector<double> conf(bins, 0.0), hits(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].low = static_cast<double>(b) / static_cast<double>(bins);
    out[b].high = static_cast<double>(b + 1) / static_cast<double>(bins);
  }
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], 0.0, 1.0);
    const auto b = std::min(static_cast<std::size_t>(std::floor(p * static_cast<double>(bins))), bins - 1);
    ++out[b].count;
    conf[b] += probabilities[i];
    hits[b] += correct[i] ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    const auto n = static_cast<double>(out[b].count);
    out[b].mean_confidence = out[b].count ? conf[b] / n : kNaN;
    out[b].accuracy = out[b].count ? hits[b] / n : kNaN;
  }
  return out;
}

bool qualifies_for_false_plausible(const QuestionRecord& question) {
  if (question.dataset != Dataset::truthfulqa) return false;
  const bool fp = std::any_of(question.options.begin(), question.options.end(),
                              [](const OptionEntry& o) { return o.false_plausible; });
  const bool nc = std::any_of(question.options.begin(), question.options.end(),
                              [](const OptionEntry& o) { return o.non_committal; });
  return fp && nc;
}

double false_plausible_rate(std::span<const QuestionRecord> questions, std::span<const AnswerValue> chosen) {
  if (questions.size() != chosen.size()) throw Error("false_plausible_rate: length mismatch");
  std::size_t qualifying = 0, flagged = 0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (!qualifies_for_false_plausible(questions[i])) continue;
    ++qualifying;
    if (const auto* c = std::get_if<char>(&chosen[i])) {
      const auto* opt = questions[i].option(*c);
      if (opt && opt->false_plausible) ++flagged;
    }
  }
  if (qualifying == 0) throw Error("false_plausible_rate: no qualifying questions");
  return static_cast<double>(flagged) / static_cast<double>(qualifying);
}

BootstrapResult paired_bootstrap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                                 std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size()) throw Error("paired_bootstrap: length mismatch");
  if (a.empty()) throw Error("paired_bootstrap: empty test set");
  if (resamples == 0) throw Error("paired_bootstrap: need at least one resample");
  auto rng = Rng::stream(seed, "bootstrap");
  const auto n = static_cast<std::uint64_t>(a.size());
  double below = 0.0;
  for (std::size_t r = 0; r < resamples; ++r) {
    long diff = 0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const auto i = rng.below(n);
      diff += static_cast<long>(a[i]) - static_cast<long>(b[i]);
    }
    if (diff < 0) {
      below += 1.0;
    } else if (diff == 0) {
      below += 0.5;
    }
  }
  BootstrapResult out;
  out.one_sided = below / static_cast<double>(resamples);
  out.two_sided = std::min(1.0, 2.0 * std::min(out.one_sided, 1.0 - out.one_sided));
  return out;
}

// ---------------------------------------------------------------------------

MethodOutcomes outcomes_from_probabilities(std::string name, const FeatureSet& set,
                                           std::span<const std::size_t> records,
                                           const std::vector<Eigen::VectorXd>& probabilities) {
  if (probabilities.size() != records.size()) throw Error("outcomes: prediction count mismatch");
  MethodOutcomes out{std::move(name), {}};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = set.records[records[i]];
    const auto& p = probabilities[i];
    InstanceOutcome o;
    o.record = records[i];
    o.ranking = rank_by_probability(p);
    const auto sel = o.ranking.front();
    o.chosen = rec.answers[sel];
    o.correct = rec.correctness[sel] != 0;
    o.probability = p[static_cast<Eigen::Index>(sel)];
    out.outcomes.push_back(std::move(o));
  }
  return out;
}

namespace {

double selection_confidence(const FeatureSet& set, const FeatureRecord& rec, std::size_t m) {
  if (rec.self_conf[m]) return *rec.self_conf[m];
  return set.prior(m, rec.question.dataset);
}

InstanceOutcome single_model_outcome(const FeatureSet& set, std::size_t record, std::size_t m) {
  const auto& rec = set.records[record];
  InstanceOutcome o;
  o.record = record;
  o.chosen = rec.answers[m];
  o.correct = rec.correctness[m] != 0;
  o.probability = selection_confidence(set, rec, m);
  o.ranking.push_back(m);
  for (std::size_t k = 0; k < set.num_models(); ++k)
    if (k != m) o.ranking.push_back(k);
  return o;
}

// Answers carrying the chosen value first, then by vote count, then index.
std::vector<std::size_t> vote_ranking(const FeatureRecord& rec, const AnswerValue& winner) {
  const std::size_t M = rec.answers.size();
  std::vector<double> votes(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    if (!is_valid(rec.answers[m])) {
      votes[m] = -1.0;
      continue;
    }
    const auto key = voting_key(rec.answers[m]);
    if (is_valid(winner) && key == winner) {
      votes[m] = static_cast<double>(M + 1);
      continue;
    }
    for (std::size_t k = 0; k < M; ++k)
      if (is_valid(rec.answers[k]) && voting_key(rec.answers[k]) == key) votes[m] += 1.0;
  }
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return votes[a] > votes[b]; });
  return order;
}

InstanceOutcome vote_outcome(const FeatureRecord& rec, std::size_t record, const VoteOutcome& vote) {
  InstanceOutcome o;
  o.record = record;
  o.chosen = vote.winner;
  o.abstained = !is_valid(vote.winner);
  o.correct = !o.abstained && value_matches_gold(vote.winner, rec.question);
  o.probability = o.abstained ? 0.0 : vote.share;
  o.ranking = vote_ranking(rec, vote.winner);
  return o;
}

}  // namespace

std::vector<MethodOutcomes> run_baselines(const FeatureSet& set, std::span<const std::size_t> records,
                                          const BaselineOptions& options) {
  const std::size_t M = set.num_models();
  std::vector<MethodOutcomes> out;

  {
    MethodOutcomes method{kRandomName, {}};
    auto rng = Rng::stream(options.seed, "baseline.random");
    for (const auto r : records) method.outcomes.push_back(single_model_outcome(set, r, random_select(M, rng)));
    out.push_back(std::move(method));
  }
  {
    MethodOutcomes method{kMajorityName, {}};
    auto rng = Rng::stream(options.seed, "baseline.majority");
    for (const auto r : records) {
      const auto& rec = set.records[r];
      method.outcomes.push_back(vote_outcome(rec, r, majority_vote(rec.answers, rng)));
    }
    out.push_back(std::move(method));
  }
  {
    const auto ref = options.self_consistency_reference;
    if (ref >= M) throw Error("self-consistency reference model index out of range");
    std::size_t with_samples = 0;
    for (const auto r : records) with_samples += set.records[r].samples.count(ref);
    if (with_samples > 0) {
      MethodOutcomes method{kSelfConsistencyName, {}};
      auto rng = Rng::stream(options.seed, "baseline.self_consistency");
      for (const auto r : records) {
        const auto& rec = set.records[r];
        method.outcomes.push_back(vote_outcome(rec, r, self_consistency(rec, ref, rng)));
      }
      out.push_back(std::move(method));
    }
  }
  {
    MethodOutcomes method{kBestSingleName, {}};
    const auto best = best_single_model(set, set.indices(Split::train));
    for (const auto r : records) {
      const auto it = best.find(set.records[r].question.dataset);
      if (it == best.end())
        throw Error("best single model: no training questions for dataset " + to_string(set.records[r].question.dataset));
      method.outcomes.push_back(single_model_outcome(set, r, it->second));
    }
    out.push_back(std::move(method));
  }
  return out;
}

std::string method_label(ModelKind kind) {
  switch (kind) {
    case ModelKind::logreg: return "Consensus (logreg)";
    case ModelKind::gbdt: return "Consensus (GBDT)";
    case ModelKind::mlp: return "Consensus (MLP)";
    case ModelKind::rank: return "Consensus (RankNet)";
    case ModelKind::gcn: return "Consensus (GCN)";
    case ModelKind::gat: return "Consensus (GAT)";
    case ModelKind::gating: return "Gating";
    case ModelKind::rf: return "Consensus (RF)";
  }
  return "Consensus";
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> correct_vector(const MethodOutcomes& m) {
  std::vector<std::uint8_t> out;
  for (const auto& o : m.outcomes) out.push_back(o.correct ? 1 : 0);
  return out;
}

}  // namespace

double macro_accuracy(const FeatureSet& set, const MethodOutcomes& method) {
  std::map<Dataset, std::vector<std::uint8_t>> by_dataset;
  for (const auto& o : method.outcomes) by_dataset[set.records[o.record].question.dataset].push_back(o.correct ? 1 : 0);
  if (by_dataset.empty()) throw Error("accuracy: empty test set");
  double sum = 0.0;
  for (const auto& [d, c] : by_dataset) sum += accuracy(c);
  return sum / static_cast<double>(by_dataset.size());
}

EvalReport summarize(const FeatureSet& set, std::span<const MethodOutcomes> methods, const EvalConfig& config) {
  EvalReport report;
  report.config = config;
  report.manifest_hash = set.manifest.hash;
  if (methods.empty()) throw Error("no methods to evaluate");
  report.num_test = methods.front().outcomes.size();
  if (report.num_test == 0) throw Error("test split is empty");
  for (const auto& m : methods) {
    if (m.outcomes.size() != report.num_test) throw Error("methods were evaluated on different records");
    for (std::size_t i = 0; i < report.num_test; ++i)
      if (m.outcomes[i].record != methods.front().outcomes[i].record)
        throw Error("methods were evaluated on different records");
  }
  for (const auto& o : methods.front().outcomes) report.datasets.push_back(set.records[o.record].question.dataset);
  std::sort(report.datasets.begin(), report.datasets.end());
  report.datasets.erase(std::unique(report.datasets.begin(), report.datasets.end()), report.datasets.end());

  const MethodOutcomes* reference = nullptr;
  for (const auto& m : methods)
    if (m.name == config.reference) reference = &m;
  if (!config.reference.empty() && !reference) throw Error("bootstrap reference method '" + config.reference + "' not evaluated");

  report.methods.resize(methods.size());
  parallel_for(methods.size(), [&](std::size_t k) {
    const auto& m = methods[k];
    MethodSummary s;
    s.name = m.name;
    for (const auto d : report.datasets) {
      std::vector<std::uint8_t> correct;
      std::vector<double> prob;
      std::vector<std::vector<std::size_t>> rankings;
      std::vector<std::vector<std::uint8_t>> labels;
      DatasetMetrics dm;
      for (const auto& o : m.outcomes) {
        const auto& rec = set.records[o.record];
        if (rec.question.dataset != d) continue;
        correct.push_back(o.correct ? 1 : 0);
        prob.push_back(o.probability);
        rankings.push_back(o.ranking);
        labels.push_back(rec.correctness);
        dm.abstentions += o.abstained ? 1 : 0;
      }
      dm.n = correct.size();
      dm.accuracy = accuracy(correct);
      dm.mrr = mrr(rankings, labels);
      dm.brier = brier(prob, correct);
      s.per_dataset[d] = dm;
    }
    const auto D = static_cast<double>(report.datasets.size());
    for (const auto& [d, dm] : s.per_dataset) {
      s.macro_accuracy += dm.accuracy / D;
      s.macro_mrr += dm.mrr / D;
      s.macro_brier += dm.brier / D;
    }
    std::vector<double> prob;
    for (const auto& o : m.outcomes) prob.push_back(o.probability);
    s.reliability = reliability_diagram(prob, correct_vector(m));
    std::vector<QuestionRecord> questions;
    std::vector<AnswerValue> chosen;
    for (const auto& o : m.outcomes) {
      if (!qualifies_for_false_plausible(set.records[o.record].question)) continue;
      questions.push_back(set.records[o.record].question);
      chosen.push_back(o.chosen);
    }
    if (!questions.empty()) s.false_plausible = false_plausible_rate(questions, chosen);
    if (reference && reference != &m)
      s.bootstrap = paired_bootstrap(correct_vector(m), correct_vector(*reference), config.resamples, config.seed);
    report.methods[k] = std::move(s);
  });
  return report;
}

std::string table1_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method";
  for (const auto d : report.datasets) out << ',' << to_string(d);
  out << ",macro\n";
  for (const auto& m : report.methods) {
    out << m.name;
    for (const auto d : report.datasets) out << ',' << format_double(m.per_dataset.at(d).accuracy);
    out << ',' << format_double(m.macro_accuracy) << '\n';
  }
  return out.str();
}

std::string metrics_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method,dataset,n,accuracy,mrr,brier,abstentions\n";
  for (const auto& m : report.methods) {
    for (const auto d : report.datasets) {
      const auto& dm = m.per_dataset.at(d);
      out << m.name << ',' << to_string(d) << ',' << dm.n << ',' << format_double(dm.accuracy) << ','
          << format_double(dm.mrr) << ',' << format_double(dm.brier) << ',' << dm.abstentions << '\n';
    }
    out << m.name << ",macro," << report.num_test << ',' << format_double(m.macro_accuracy) << ','
        << format_double(m.macro_mrr) << ',' << format_double(m.macro_brier) << ",NA\n";
  }
  return out.str();
}

std::string reliability_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method,bin,low,high,count,mean_confidence,accuracy\n";
  for (const auto& m : report.methods) {
    for (std::size_t b = 0; b < m.reliability.size(); ++b) {
      const auto& bin = m.reliability[b];
      out << m.name << ',' << b << ',' << format_double(bin.low) << ',' << format_double(bin.high) << ','
          << bin.count << ',' << format_double(bin.mean_confidence) << ',' << format_double(bin.accuracy) << '\n';
    }
  }
  return out.str();
}

std::string bootstrap_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "method,reference,resamples,p_one_sided,p_two_sided,false_plausible_rate\n";
  for (const auto& m : report.methods) {
    out << m.name << ',' << report.config.reference << ',' << report.config.resamples << ','
        << (m.bootstrap ? format_double(m.bootstrap->one_sided) : "NA") << ','
        << (m.bootstrap ? format_double(m.bootstrap->two_sided) : "NA") << ','
        << (m.false_plausible ? format_double(*m.false_plausible) : "NA") << '\n';
  }
  return out.str();
}

namespace {

std::string pct(double v) { return std::isnan(v) ? "NA" : format_fixed(100.0 * v, 1); }

}  // namespace

std::string report_markdown(const EvalReport& report) {
  std::ostringstream out;
  out << "# Evaluation report\n\n";
  out << "Test questions: " << report.num_test << "  \n";
  out << "Feature manifest: `" << report.manifest_hash << "`  \n";
  out << "Seed: " << report.config.seed << "\n\n";

  out << "## Accuracy (%)\n\n| Method |";
  for (const auto d : report.datasets) out << ' ' << to_string(d) << " |";
  out << " Macro |\n|---|";
  for (std::size_t i = 0; i <= report.datasets.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& m : report.methods) {
    out << "| " << m.name << " |";
    for (const auto d : report.datasets) out << ' ' << pct(m.per_dataset.at(d).accuracy) << " |";
    out << ' ' << pct(m.macro_accuracy) << " |\n";
  }

  out << "\n## Ranking and calibration (macro)\n\n| Method | MRR | Brier | Abstentions |\n|---|---:|---:|---:|\n";
  for (const auto& m : report.methods) {
    std::size_t abstain = 0;
    for (const auto& [d, dm] : m.per_dataset) abstain += dm.abstentions;
    out << "| " << m.name << " | " << format_fixed(m.macro_mrr, 4) << " | " << format_fixed(m.macro_brier, 4) << " | "
        << abstain << " |\n";
  }

  const bool any_fp = std::any_of(report.methods.begin(), report.methods.end(),
                                  [](const MethodSummary& m) { return m.false_plausible.has_value(); });
  if (any_fp) {
    out << "\n## TruthfulQA false-but-plausible selections (%)\n\n| Method | Rate |\n|---|---:|\n";
    for (const auto& m : report.methods)
      out << "| " << m.name << " | " << (m.false_plausible ? pct(*m.false_plausible) : "NA") << " |\n";
  }

  if (!report.config.reference.empty()) {
    out << "\n## Paired bootstrap vs " << report.config.reference << " (" << report.config.resamples
        << " resamples)\n\n| Method | p (one-sided) | p (two-sided) |\n|---|---:|---:|\n";
    for (const auto& m : report.methods) {
      if (!m.bootstrap) continue;
      out << "| " << m.name << " | " << format_fixed(m.bootstrap->one_sided, 4) << " | "
          << format_fixed(m.bootstrap->two_sided, 4) << " |\n";
    }
  }

  out << "\n## Reliability (selected answer)\n\n";
  for (const auto& m : report.methods) {
    out << "### " << m.name << "\n\n| Bin | Count | Mean confidence | Accuracy |\n|---|---:|---:|---:|\n";
    for (const auto& bin : m.reliability)
      out << "| [" << format_fixed(bin.low, 1) << ", " << format_fixed(bin.high, 1) << ") | " << bin.count << " | "
          << (bin.count ? format_fixed(bin.mean_confidence, 3) : "NA") << " | "
          << (bin.count ? format_fixed(bin.accuracy, 3) : "NA") << " |\n";
    out << '\n';
  }
  return out.str();
}

std::string history_rows_csv(const std::vector<std::pair<std::string, TrainHistory>>& histories) {
  std::ostringstream out;
  out << "method,epoch,train_loss,val_loss\n";
  for (const auto& [name, h] : histories)
    for (const auto& e : h.epochs)
      out << name << ',' << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

void emit_report(const std::filesystem::path& dir, const EvalReport& report,
                 const std::vector<std::pair<std::string, TrainHistory>>& histories) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "report.md", report_markdown(report));
  write_text(dir / "table1.csv", table1_csv(report));
  write_text(dir / "metrics.csv", metrics_csv(report));
  write_text(dir / "reliability.csv", reliability_csv(report));
  write_text(dir / "bootstrap.csv", bootstrap_csv(report));
  write_text(dir / "history.csv", history_rows_csv(histories));
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::vector<std::string> cells;
    std::size_t cell = 0;
    while (true) {
      const auto comma = line.find(',', cell);
      cells.emplace_back(line.substr(cell, comma == std::string_view::npos ? std::string_view::npos : comma - cell));
      if (comma == std::string_view::npos) break;
      cell = comma + 1;
    }
    rows.push_back(std::move(cells));
    start = end + 1;
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::vector<AblationRow> default_ablation_rows() {
  using B = FeatureBlock;
  return {{"Full feature set", {B::sem, B::lex, B::logic, B::conf, B::prior}},
          {"w/o semantic similarity & clustering", {B::lex, B::logic, B::conf, B::prior}},
          {"w/o lexical & structural", {B::sem, B::logic, B::conf, B::prior}},
          {"w/o reasoning-quality scores", {B::sem, B::lex, B::conf, B::prior}},
          {"w/o confidence & model priors", {B::sem, B::lex, B::logic}},
          {"semantic + clustering only", {B::sem}}};
}

std::vector<AblationRow> parse_ablation_spec(const nlohmann::json& spec) {
  static const std::vector<FeatureBlock> all = {FeatureBlock::sem, FeatureBlock::lex, FeatureBlock::logic,
                                                FeatureBlock::conf, FeatureBlock::prior};
  std::vector<AblationRow> rows;
  try {
    const auto& list = spec.is_array() ? spec : spec.at("rows");
    for (const auto& r : list) {
      AblationRow row;
      row.label = r.at("label").get<std::string>();
      const bool has_blocks = r.contains("blocks"), has_drop = r.contains("drop");
      if (has_blocks == has_drop) throw Error("ablation row '" + row.label + "' needs exactly one of blocks/drop");
      std::vector<FeatureBlock> named;
      for (const auto& b : r.at(has_blocks ? "blocks" : "drop")) named.push_back(parse_feature_block(b.get<std::string>()));
      for (const auto b : all) {
        const bool listed = std::find(named.begin(), named.end(), b) != named.end();
        if (listed == has_blocks) row.blocks.push_back(b);
      }
      if (row.blocks.empty()) throw Error("ablation row '" + row.label + "' keeps no feature block");
      rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("ablation spec: malformed: ") + e.what());
  }
  if (rows.empty()) throw Error("ablation spec has no rows");
  return rows;
}

std::vector<AblationResult> run_ablation(const FeatureSet& set, ModelKind kind, const ModelOptions& options,
                                         std::span<const AblationRow> rows) {
  const auto test = set.indices(Split::test);
  if (test.empty()) throw Error("test split is empty");
  std::vector<AblationResult> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    auto opts = options;
    opts.blocks = rows[i].blocks;
    const auto model = train_model(set, kind, opts);
    const auto outcomes = outcomes_from_probabilities(rows[i].label, set, test, predict(model, set, test));
    out[i] = {rows[i].label, rows[i].blocks, macro_accuracy(set, outcomes), 0.0};
  });
  for (auto& r : out) r.delta = r.macro_accuracy - out.front().macro_accuracy;
  return out;
}

std::string table2_csv(std::span<const AblationResult> results) {
  std::ostringstream out;
  out << "feature_set,blocks,accuracy,delta\n";
  for (const auto& r : results) {
    std::string blocks;
    for (const auto b : r.blocks) blocks += (blocks.empty() ? "" : "+") + to_string(b);
    out << r.label << ',' << blocks << ',' << format_double(r.macro_accuracy) << ',' << format_double(r.delta) << '\n';
  }
  return out.str();
}

std::string table2_markdown(std::span<const AblationResult> results) {
  std::ostringstream out;
  out << "| Feature set | Accuracy (%) | Delta vs full |\n|---|---:|---:|\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << "| " << r.label << " | " << pct(r.macro_accuracy) << " | "
        << (i == 0 ? std::string("--") : (r.delta >= 0 ? "+" : "") + format_fixed(100.0 * r.delta, 1)) << " |\n";
  }
  return out.str();
}

}  // namespace mcre
