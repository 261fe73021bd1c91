#include "mcre/json_io.hpp"

#include <fstream>
#include <limits>

#include "mcre/error.hpp"

namespace mcre {

using nlohmann::json;

json manifest_to_json(const FeatureManifest& manifest) {
  json features = json::array();
  for (const auto& f : manifest.features)
    features.push_back({{"name", f.name}, {"block", to_string(f.block)}, {"categorical", f.categorical}});
  return {{"version", manifest.version},
          {"hash", manifest.hash},
          {"features", features},
          {"discourse_markers", manifest.discourse_markers},
          {"step_markers", manifest.step_markers},
          {"verification_phrases", manifest.verification_phrases}};
}

FeatureManifest manifest_from_json(const json& j) {
  FeatureManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kFeatureManifestVersion) throw Error("feature manifest: unsupported version " + std::to_string(m.version));
  for (const auto& f : j.at("features"))
    m.features.push_back({f.at("name").get<std::string>(), parse_feature_block(f.at("block").get<std::string>()),
                          f.at("categorical").get<bool>()});
  m.discourse_markers = j.at("discourse_markers").get<std::vector<std::string>>();
  m.step_markers = j.at("step_markers").get<std::vector<std::string>>();
  m.verification_phrases = j.at("verification_phrases").get<std::vector<std::string>>();
  m.hash = compute_manifest_hash(m);
  if (m.hash != j.at("hash").get<std::string>()) throw Error("feature manifest: hash does not match its contents");
  return m;
}

json graph_construction_to_json(const GraphConstruction& g) {
  if (g.kind == GraphConstruction::Kind::threshold) return {{"kind", "threshold"}, {"tau", g.tau}};
  return {{"kind", "knn"}, {"k", g.k}};
}

GraphConstruction graph_construction_from_json(const json& j) {
  GraphConstruction g;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "threshold") {
    g.kind = GraphConstruction::Kind::threshold;
    g.tau = j.at("tau").get<double>();
  } else if (kind == "knn") {
    g.kind = GraphConstruction::Kind::knn;
    g.k = j.at("k").get<std::size_t>();
  } else {
    throw Error("unknown graph construction '" + kind + "'");
  }
  return g;
}

namespace {

json bound_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double bound_from_json(const json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

}  // namespace

json standardizer_to_json(const StandardizationStats& stats) {
  json low = json::array(), high = json::array();
  for (std::size_t i = 0; i < stats.dim(); ++i) {
    low.push_back(bound_to_json(stats.clip_low[i]));
    high.push_back(bound_to_json(stats.clip_high[i]));
  }
  std::vector<int> categorical(stats.categorical.begin(), stats.categorical.end());
  return {{"mean", stats.mean}, {"std", stats.std}, {"clip_low", low}, {"clip_high", high}, {"categorical", categorical}};
}

StandardizationStats standardizer_from_json(const json& j) {
  StandardizationStats st;
  st.mean = j.at("mean").get<std::vector<double>>();
  st.std = j.at("std").get<std::vector<double>>();
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (const auto& v : j.at("clip_low")) st.clip_low.push_back(bound_from_json(v, -inf));
  for (const auto& v : j.at("clip_high")) st.clip_high.push_back(bound_from_json(v, inf));
  for (const auto& v : j.at("categorical")) st.categorical.push_back(v.get<int>() != 0);
  const auto d = st.mean.size();
  if (st.std.size() != d || st.clip_low.size() != d || st.clip_high.size() != d || st.categorical.size() != d)
    throw Error("standardizer: inconsistent widths");
  return st;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error("matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.filename().string() + ": malformed JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace mcre
