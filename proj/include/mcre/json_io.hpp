#pragma once

#include <json.hpp>

#include "mcre/corpus.hpp"
#include "mcre/features.hpp"
#include "mcre/graph.hpp"
#include "mcre/training.hpp"

namespace mcre {

nlohmann::json question_to_json(const QuestionRecord& q);
QuestionRecord question_from_json(const nlohmann::json& j);

nlohmann::json catalog_to_json(std::span<const ModelCatalogEntry> catalog);
std::vector<ModelCatalogEntry> catalog_from_json(const nlohmann::json& j);

nlohmann::json manifest_to_json(const FeatureManifest& manifest);
FeatureManifest manifest_from_json(const nlohmann::json& j);

nlohmann::json graph_construction_to_json(const GraphConstruction& g);
GraphConstruction graph_construction_from_json(const nlohmann::json& j);

nlohmann::json standardizer_to_json(const StandardizationStats& stats);
StandardizationStats standardizer_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);  // row-major nested arrays
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

/// Reads a whole JSON document, naming the file in errors.
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace mcre
