#include "mcre/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mcre/error.hpp"
#include "mcre/json_io.hpp"
#include "parallel.hpp"

namespace mcre {

using nlohmann::json;

namespace {
unsigned g_thread_limit = 0;
}

void set_thread_limit(unsigned threads) { g_thread_limit = threads; }

unsigned thread_limit() {
  if (g_thread_limit > 0) return g_thread_limit;
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FeatureSet::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

double FeatureSet::prior(std::size_t m, Dataset d) const {
  const auto& table = catalog.at(m).per_dataset_prior_accuracy;
  const auto it = table.find(to_string(d));
  if (it == table.end()) throw Error("no prior accuracy for " + catalog[m].model_id + " on " + to_string(d));
  return it->second;
}

FeatureSet build_feature_set(Corpus corpus, const GraphConstruction& graph, std::uint64_t split_seed,
                             const SplitRatios& ratios) {
  if (!corpus.has_embeddings) throw Error("corpus has no embeddings for some answers");
  FeatureSet set;
  set.graph = graph;
  set.split_seed = split_seed;
  set.ratios = ratios;
  set.catalog = corpus.manifest.catalog;
  assign_splits(corpus.instances, ratios, split_seed);

  std::vector<ConsensusInstance> train;
  for (const auto& inst : corpus.instances)
    if (inst.split == Split::train) train.push_back(inst);
  fit_prior_accuracy(set.catalog, train);
  // A dataset absent from train has no prior; fall back to the pooled train accuracy.
  for (const auto& inst : corpus.instances) {
    const auto name = to_string(inst.question.dataset);
    for (std::size_t m = 0; m < set.catalog.size(); ++m) {
      auto& table = set.catalog[m].per_dataset_prior_accuracy;
      if (table.count(name)) continue;
      double correct = 0.0;
      for (const auto& t : train) correct += t.correctness[m];
      table[name] = train.empty() ? 0.5 : correct / static_cast<double>(train.size());
    }
  }
  set.manifest = build_feature_manifest(set.catalog);

  const std::size_t M = set.catalog.size();
  set.records.resize(corpus.instances.size());
  parallel_for(corpus.instances.size(), [&](std::size_t i) {
    const auto& inst = corpus.instances[i];
    auto features = extract_instance_features(inst, set.manifest, set.catalog);
    FeatureRecord r;
    r.question = inst.question;
    r.split = inst.split;
    r.correctness = inst.correctness;
    r.rows = std::move(features.rows);
    r.graph = build_graph(features.similarity, graph);
    for (std::size_t m = 0; m < M; ++m) {
      const auto& a = inst.answers[m];
      r.answers.push_back(a.parsed.final_normalized);
      std::optional<double> conf;
      if (a.response.self_confidence_raw) conf = normalize_confidence(*a.response.self_confidence_raw);
      r.self_conf.push_back(conf);
    }
    for (const auto& [m, parsed] : inst.samples)
      for (const auto& p : parsed) r.samples[m].push_back(p.final_normalized);
    if (inst.question_embedding) r.question_embedding = inst.question_embedding->values;
    set.records[i] = std::move(r);
  });
  return set;
}

json answer_to_json(const AnswerValue& value) {
  if (const auto* d = std::get_if<double>(&value)) return *d;
  if (const auto* c = std::get_if<char>(&value)) return std::string(1, *c);
  return nullptr;
}

AnswerValue answer_from_json(const json& j) {
  if (j.is_null()) return InvalidAnswer{};
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s.size() != 1) throw Error("bad answer value '" + s + "'");
  return s[0];
}

json feature_set_to_json(const FeatureSet& set) {
  json records = json::array();
  for (const auto& r : set.records) {
    json answers = json::array(), conf = json::array();
    for (const auto& a : r.answers) answers.push_back(answer_to_json(a));
    for (const auto& c : r.self_conf) conf.push_back(c ? json(*c) : json(nullptr));
    json edges = json::array();
    for (const auto& e : r.graph.edges) edges.push_back({e.m, e.n, e.weight});
    json samples = json::object();
    for (const auto& [m, values] : r.samples) {
      json v = json::array();
      for (const auto& a : values) v.push_back(answer_to_json(a));
      samples[std::to_string(m)] = std::move(v);
    }
    std::vector<int> correctness(r.correctness.begin(), r.correctness.end());
    records.push_back({{"question", question_to_json(r.question)},
                       {"split", to_string(r.split)},
                       {"answers", answers},
                       {"correctness", correctness},
                       {"self_conf", conf},
                       {"features", matrix_to_json(r.rows)},
                       {"edges", edges},
                       {"samples", samples},
                       {"question_embedding", r.question_embedding ? json(*r.question_embedding) : json(nullptr)}});
  }
  return {{"version", kFeatureSetVersion},
          {"manifest_hash", set.manifest.hash},
          {"manifest", manifest_to_json(set.manifest)},
          {"graph", graph_construction_to_json(set.graph)},
          {"catalog", catalog_to_json(set.catalog)},
          {"split_seed", set.split_seed},
          {"split_ratios", {set.ratios.train, set.ratios.val, set.ratios.test}},
          {"records", records}};
}

FeatureSet feature_set_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != kFeatureSetVersion) throw Error("feature set: unsupported version");
    FeatureSet set;
    set.manifest = manifest_from_json(j.at("manifest"));
    if (set.manifest.hash != j.at("manifest_hash").get<std::string>())
      throw Error("feature set: manifest hash mismatch");
    set.graph = graph_construction_from_json(j.at("graph"));
    set.catalog = catalog_from_json(j.at("catalog"));
    set.split_seed = j.at("split_seed").get<std::uint64_t>();
    const auto ratios = j.at("split_ratios").get<std::vector<double>>();
    set.ratios = {ratios.at(0), ratios.at(1), ratios.at(2)};
    const std::size_t M = set.catalog.size();
    for (const auto& rj : j.at("records")) {
      FeatureRecord r;
      r.question = question_from_json(rj.at("question"));
      r.split = parse_split(rj.at("split").get<std::string>());
      for (const auto& a : rj.at("answers")) r.answers.push_back(answer_from_json(a));
      for (const auto& c : rj.at("correctness")) r.correctness.push_back(static_cast<std::uint8_t>(c.get<int>()));
      for (const auto& c : rj.at("self_conf"))
        r.self_conf.push_back(c.is_null() ? std::nullopt : std::optional<double>(c.get<double>()));
      r.rows = matrix_from_json(rj.at("features"));
      r.graph.num_nodes = M;
      r.graph.construction = set.graph;
      for (const auto& e : rj.at("edges"))
        r.graph.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
      for (const auto& [key, values] : rj.at("samples").items()) {
        auto& out = r.samples[std::stoul(key)];
        for (const auto& a : values) out.push_back(answer_from_json(a));
      }
      if (const auto& qe = rj.at("question_embedding"); !qe.is_null())
        r.question_embedding = qe.get<std::vector<double>>();
      if (r.answers.size() != M || r.correctness.size() != M || r.self_conf.size() != M ||
          static_cast<std::size_t>(r.rows.rows()) != M || static_cast<std::size_t>(r.rows.cols()) != set.manifest.dim())
        throw Error("feature set: record " + r.question.question_id + " has inconsistent widths");
      set.records.push_back(std::move(r));
    }
    return set;
  } catch (const json::exception& e) {
    throw Error(std::string("feature set: malformed: ") + e.what());
  }
}

void save_feature_set(const std::filesystem::path& path, const FeatureSet& set) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << feature_set_to_json(set).dump() << '\n';
}

FeatureSet load_feature_set(const std::filesystem::path& path) { return feature_set_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names = {"logreg", "gbdt", "mlp", "rank", "gcn", "gat", "gating", "rf"};
  return names;
}

std::string to_string(ModelKind kind) { return model_kind_names().at(static_cast<std::size_t>(kind)); }

ModelKind parse_model_kind(std::string_view name) {
  const auto& names = model_kind_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<ModelKind>(i);
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw UsageError("unknown model kind '" + std::string(name) + "' (valid: " + valid + ")");
}

namespace {

struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<double> y;
  QueryGroups groups;
};

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& rows, const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = rows.col(static_cast<Eigen::Index>(columns[c]));
  return out;
}

Eigen::MatrixXd stacked_rows(const FeatureSet& set, std::span<const std::size_t> records,
                             const std::vector<std::size_t>& columns) {
  const auto M = static_cast<Eigen::Index>(set.num_models());
  Eigen::MatrixXd out(M * static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < records.size(); ++i)
    out.middleRows(static_cast<Eigen::Index>(i) * M, M) = select_columns(set.records[records[i]].rows, columns);
  return out;
}

DesignMatrix design(const TrainedModel& model, const FeatureSet& set, std::span<const std::size_t> records) {
  DesignMatrix d;
  d.x = apply_standardizer(model.standardizer, stacked_rows(set, records, model.columns));
  for (const auto r : records) {
    for (const auto z : set.records[r].correctness) d.y.push_back(z);
    d.groups.add(set.num_models());
  }
  return d;
}

std::vector<GraphSample> graph_samples(const TrainedModel& model, const FeatureSet& set,
                                       std::span<const std::size_t> records) {
  std::vector<GraphSample> out;
  for (const auto r : records) {
    const auto& rec = set.records[r];
    GraphSample s;
    s.graph = rec.graph;
    s.features = apply_standardizer(model.standardizer, select_columns(rec.rows, model.columns));
    s.labels.assign(rec.correctness.begin(), rec.correctness.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> gating_dataset_order(const FeatureSet& set, std::span<const std::size_t> train) {
  std::vector<Dataset> seen;
  for (const auto r : train) seen.push_back(set.records[r].question.dataset);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  std::vector<std::string> out;
  for (const auto d : seen) out.push_back(to_string(d));
  return out;
}

Eigen::VectorXd gating_input(const TrainedModel& model, const FeatureRecord& rec) {
  if (model.gating_uses_embedding) {
    if (!rec.question_embedding) throw Error("gating: question embedding missing for " + rec.question.question_id);
    return Eigen::Map<const Eigen::VectorXd>(rec.question_embedding->data(),
                                             static_cast<Eigen::Index>(rec.question_embedding->size()));
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.gating_datasets.size()));
  const auto name = to_string(rec.question.dataset);
  for (std::size_t i = 0; i < model.gating_datasets.size(); ++i)
    if (model.gating_datasets[i] == name) u[static_cast<Eigen::Index>(i)] = 1.0;
  return u;
}

Eigen::VectorXd gating_prior_vector(const TrainedModel& model, const FeatureRecord& rec) {
  const auto it = model.gating_priors.find(to_string(rec.question.dataset));
  if (it == model.gating_priors.end())
    throw Error("gating: no prior accuracies for dataset " + to_string(rec.question.dataset));
  return Eigen::Map<const Eigen::VectorXd>(it->second.data(), static_cast<Eigen::Index>(it->second.size()));
}

void train_gradient_model(TrainedModel& model, const Objective& train, const Objective& val,
                          const ParamLayout& layout, const ModelOptions& options) {
  auto init = Rng::stream(options.train.seed, "init");
  glorot_init(layout, model.params, init);
  model.history = train_loop(model.params, train, val, options.train, layout);
}

}  // namespace

TrainedModel train_model(const FeatureSet& set, ModelKind kind, const ModelOptions& options) {
  TrainedModel model;
  model.kind = kind;
  model.manifest_hash = set.manifest.hash;
  model.blocks = options.blocks;
  model.seed = options.train.seed;
  const auto train_idx = set.indices(Split::train);
  const auto val_idx = set.indices(Split::val);
  if (train_idx.empty()) throw Error("training split is empty");

  if (kind == ModelKind::gating) {
    const std::size_t M = set.num_models();
    model.gating_uses_embedding = std::all_of(set.records.begin(), set.records.end(),
                                              [](const FeatureRecord& r) { return r.question_embedding.has_value(); });
    if (!model.gating_uses_embedding) model.gating_datasets = gating_dataset_order(set, train_idx);
    for (const auto& r : set.records) {
      const auto name = to_string(r.question.dataset);
      if (model.gating_priors.count(name)) continue;
      std::vector<double> p(M);
      for (std::size_t m = 0; m < M; ++m) p[m] = set.prior(m, r.question.dataset);
      model.gating_priors[name] = std::move(p);
    }
    const auto input_dim = gating_input(model, set.records[train_idx.front()]).size();
    model.gating = {input_dim, 32, static_cast<Eigen::Index>(M)};
    auto build = [&](std::span<const std::size_t> idx, Eigen::MatrixXd& u, Eigen::MatrixXd& z) {
      u.resize(static_cast<Eigen::Index>(idx.size()), input_dim);
      z.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(M));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& rec = set.records[idx[i]];
        u.row(static_cast<Eigen::Index>(i)) = gating_input(model, rec).transpose();
        for (std::size_t m = 0; m < M; ++m)
          z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = rec.correctness[m];
      }
    };
    Eigen::MatrixXd u_train, z_train, u_val, z_val;
    build(train_idx, u_train, z_train);
    build(val_idx, u_val, z_val);
    const GatingObjective train(model.gating, u_train, z_train);
    const GatingObjective val(model.gating, u_val, z_val);
    train_gradient_model(model, train, val, gating_layout(model.gating), options);
    return model;
  }

  model.columns = set.manifest.columns_of(options.blocks);
  if (model.columns.empty()) throw Error("no feature columns selected");
  {
    const auto mask = set.manifest.categorical_mask();
    std::vector<bool> categorical;
    for (const auto c : model.columns) categorical.push_back(mask[c]);
    model.standardizer = fit_standardizer(stacked_rows(set, train_idx, model.columns), categorical);
  }
  const auto d = static_cast<Eigen::Index>(model.columns.size());

  switch (kind) {
    case ModelKind::logreg: {
      const auto tr = design(model, set, train_idx);
      const auto va = design(model, set, val_idx);
      const LogRegObjective train(tr.x, tr.y), val(va.x, va.y);
      train_gradient_model(model, train, val, logreg_layout(d), options);
      break;
    }
    case ModelKind::mlp: {
      model.mlp.input = d;
      const auto tr = design(model, set, train_idx);
      const auto va = design(model, set, val_idx);
      const MlpObjective train(model.mlp, tr.x, tr.y), val(model.mlp, va.x, va.y);
      train_gradient_model(model, train, val, mlp_layout(model.mlp), options);
      break;
    }
    case ModelKind::gcn:
    case ModelKind::gat: {
      model.gcn.input = d;
      model.gat.input = d;
      const auto variant = kind == ModelKind::gcn ? GnnVariant::gcn : GnnVariant::gat;
      const auto tr = graph_samples(model, set, train_idx);
      const auto va = graph_samples(model, set, val_idx);
      const GnnObjective train(variant, model.gcn, model.gat, tr), val(variant, model.gcn, model.gat, va);
      train_gradient_model(model, train, val,
                           variant == GnnVariant::gcn ? gcn_layout(model.gcn) : gat_layout(model.gat), options);
      break;
    }
    case ModelKind::gbdt: {
      const auto tr = design(model, set, train_idx);
      const auto va = design(model, set, val_idx);
      model.trees = gbdt_train(tr.x, tr.y, va.x, va.y, options.gbdt, &model.boosting_curve);
      break;
    }
    case ModelKind::rank: {
      const auto tr = design(model, set, train_idx);
      const auto va = design(model, set, val_idx);
      model.trees = rank_train(tr.x, tr.y, tr.groups, va.x, va.y, va.groups, options.gbdt);
      break;
    }
    case ModelKind::rf: {
      const auto tr = design(model, set, train_idx);
      auto config = options.forest;
      config.seed = options.train.seed;
      model.forest = forest_train(tr.x, tr.y, config);
      break;
    }
    case ModelKind::gating: break;
  }
  return model;
}

std::vector<Eigen::VectorXd> predict(const TrainedModel& model, const FeatureSet& set,
                                     std::span<const std::size_t> records) {
  if (model.manifest_hash != set.manifest.hash)
    throw Error("model was trained against feature manifest " + model.manifest_hash + ", features have " +
                set.manifest.hash);
  const auto M = static_cast<Eigen::Index>(set.num_models());
  std::vector<Eigen::VectorXd> out(records.size());
  if (records.empty()) return out;

  if (model.kind == ModelKind::gating) {
    parallel_for(records.size(), [&](std::size_t i) {
      const auto& rec = set.records[records[i]];
      const auto w = gating_forward(model.gating, model.params, gating_input(model, rec));
      out[i] = gating_consensus(w, gating_prior_vector(model, rec)).probabilities;
    });
    return out;
  }
  if (model.kind == ModelKind::gcn || model.kind == ModelKind::gat) {
    const auto samples = graph_samples(model, set, records);
    parallel_for(records.size(), [&](std::size_t i) {
      const auto batch = make_graph_batch(std::span(samples).subspan(i, 1));
      out[i] = model.kind == ModelKind::gcn ? gcn_forward(model.gcn, model.params, batch)
                                            : gat_forward(model.gat, model.params, batch);
    });
    return out;
  }

  const auto d = design(model, set, records);
  Eigen::VectorXd flat(d.x.rows());
  switch (model.kind) {
    case ModelKind::logreg: {
      const auto lin = logreg_unpack(logreg_layout(d.x.cols()), model.params);
      for (Eigen::Index r = 0; r < d.x.rows(); ++r) flat[r] = lin.forward(d.x.row(r).transpose());
      break;
    }
    case ModelKind::mlp: flat = mlp_forward(model.mlp, model.params, d.x); break;
    case ModelKind::gbdt:
    case ModelKind::rank:
      for (Eigen::Index r = 0; r < d.x.rows(); ++r) flat[r] = model.trees.margin(d.x, r);
      break;
    case ModelKind::rf:
      for (Eigen::Index r = 0; r < d.x.rows(); ++r) flat[r] = model.forest.predict(d.x, r);
      break;
    default: break;
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    Eigen::VectorXd v = flat.segment(static_cast<Eigen::Index>(i) * M, M);
    if (model.kind == ModelKind::rank) {
      v = scores_to_softmax(v);
    } else if (model.kind == ModelKind::gbdt) {
      v = v.unaryExpr([](double z) { return sigmoid(z); });
    }
    out[i] = std::move(v);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json trees_to_json(const std::vector<RegressionTree>& trees) {
  json out = json::array();
  for (const auto& t : trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.gain});
    out.push_back(std::move(nodes));
  }
  return out;
}

std::vector<RegressionTree> trees_from_json(const json& j) {
  std::vector<RegressionTree> out;
  for (const auto& tj : j) {
    RegressionTree t;
    for (const auto& n : tj)
      t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                         n.at(4).get<double>(), n.at(5).get<double>()});
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) continue;
      const auto size = static_cast<int>(t.nodes.size());
      if (n.left < 0 || n.left >= size || n.right < 0 || n.right >= size) throw Error("model: corrupt tree");
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

json model_to_json(const TrainedModel& model) {
  json blocks = json::array();
  for (const auto b : model.blocks) blocks.push_back(to_string(b));
  json j = {{"format_version", kModelFormatVersion},
            {"kind", to_string(model.kind)},
            {"manifest_hash", model.manifest_hash},
            {"seed", model.seed},
            {"blocks", blocks},
            {"columns", model.columns},
            {"standardizer", standardizer_to_json(model.standardizer)}};
  switch (model.kind) {
    case ModelKind::logreg: j["architecture"] = {{"input", model.columns.size()}}; break;
    case ModelKind::mlp:
      j["architecture"] = {{"input", model.mlp.input}, {"hidden", {model.mlp.hidden, model.mlp.hidden}},
                           {"dropout", model.mlp.dropout}};
      break;
    case ModelKind::gcn: j["architecture"] = {{"input", model.gcn.input}, {"layers", 2}, {"hidden", model.gcn.hidden}}; break;
    case ModelKind::gat:
      j["architecture"] = {{"input", model.gat.input},       {"layers", 2},
                           {"heads", model.gat.heads},       {"hidden_per_head", {model.gat.hidden1, model.gat.hidden2}},
                           {"negative_slope", model.gat.negative_slope}};
      break;
    case ModelKind::gating:
      j["architecture"] = {{"input", model.gating.input}, {"hidden", model.gating.hidden}, {"models", model.gating.models},
                           {"uses_question_embedding", model.gating_uses_embedding},
                           {"datasets", model.gating_datasets}, {"priors", model.gating_priors}};
      break;
    case ModelKind::gbdt:
    case ModelKind::rank:
      j["architecture"] = {{"base_score", model.trees.base_score}, {"learning_rate", model.trees.learning_rate},
                           {"max_depth", model.trees.max_depth}};
      j["trees"] = trees_to_json(model.trees.trees);
      j["boosting_curve"] = model.boosting_curve;
      break;
    case ModelKind::rf: j["trees"] = trees_to_json(model.forest.trees); break;
  }
  if (model.params.size() > 0) j["params"] = std::vector<double>(model.params.begin(), model.params.end());
  json history = json::array();
  for (const auto& e : model.history.epochs) history.push_back({e.epoch, e.train_loss, e.val_loss});
  j["history"] = {{"best_epoch", model.history.best_epoch}, {"epochs", history}};
  return j;
}

TrainedModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw Error("model: unsupported format version");
    TrainedModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.manifest_hash = j.at("manifest_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& b : j.at("blocks")) m.blocks.push_back(parse_feature_block(b.get<std::string>()));
    m.columns = j.at("columns").get<std::vector<std::size_t>>();
    m.standardizer = standardizer_from_json(j.at("standardizer"));
    const auto& a = j.at("architecture");
    switch (m.kind) {
      case ModelKind::mlp:
        m.mlp.input = a.at("input").get<Eigen::Index>();
        m.mlp.hidden = a.at("hidden").at(0).get<Eigen::Index>();
        m.mlp.dropout = a.at("dropout").get<double>();
        break;
      case ModelKind::gcn:
        m.gcn.input = a.at("input").get<Eigen::Index>();
        m.gcn.hidden = a.at("hidden").get<Eigen::Index>();
        break;
      case ModelKind::gat:
        m.gat.input = a.at("input").get<Eigen::Index>();
        m.gat.heads = a.at("heads").get<Eigen::Index>();
        m.gat.hidden1 = a.at("hidden_per_head").at(0).get<Eigen::Index>();
        m.gat.hidden2 = a.at("hidden_per_head").at(1).get<Eigen::Index>();
        m.gat.negative_slope = a.at("negative_slope").get<double>();
        break;
      case ModelKind::gating:
        m.gating = {a.at("input").get<Eigen::Index>(), a.at("hidden").get<Eigen::Index>(),
                    a.at("models").get<Eigen::Index>()};
        m.gating_uses_embedding = a.at("uses_question_embedding").get<bool>();
        m.gating_datasets = a.at("datasets").get<std::vector<std::string>>();
        m.gating_priors = a.at("priors").get<std::map<std::string, std::vector<double>>>();
        break;
      case ModelKind::gbdt:
      case ModelKind::rank:
        m.trees.base_score = a.at("base_score").get<double>();
        m.trees.learning_rate = a.at("learning_rate").get<double>();
        m.trees.max_depth = a.at("max_depth").get<int>();
        m.trees.trees = trees_from_json(j.at("trees"));
        m.boosting_curve = j.at("boosting_curve").get<std::vector<double>>();
        break;
      case ModelKind::rf: m.forest.trees = trees_from_json(j.at("trees")); break;
      case ModelKind::logreg: break;
    }
    if (auto it = j.find("params"); it != j.end()) {
      const auto p = it->get<std::vector<double>>();
      m.params = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
    }
    const auto& h = j.at("history");
    m.history.best_epoch = h.at("best_epoch").get<int>();
    for (const auto& e : h.at("epochs"))
      m.history.epochs.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>()});
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("model: malformed: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  write_json_file(path, model_to_json(model));
}

TrainedModel load_model(const std::filesystem::path& path, const std::string& expected_hash) {
  auto model = model_from_json(read_json_file(path));
  if (model.manifest_hash != expected_hash)
    throw Error(path.filename().string() + ": feature manifest hash " + model.manifest_hash +
                " does not match " + expected_hash);
  return model;
}

std::vector<std::pair<std::string, double>> feature_importance(const TrainedModel& model,
                                                               const FeatureManifest& manifest) {
  std::vector<double> gain;
  if (model.kind == ModelKind::gbdt || model.kind == ModelKind::rank) {
    gain = model.trees.gain_importance(model.columns.size());
  } else if (model.kind == ModelKind::rf) {
    BoostedTrees wrapped;
    wrapped.trees = model.forest.trees;
    gain = wrapped.gain_importance(model.columns.size());
  } else {
    throw Error("feature importance needs a tree model, got " + to_string(model.kind));
  }
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t c = 0; c < model.columns.size(); ++c)
    out.emplace_back(manifest.features.at(model.columns[c]).name, gain[c]);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace mcre
