#pragma once

// Model file format (JSON):
//
//   { "format": "editmark-model", "version": 1,
//     "config": { ...ModelConfig fields... },
//     "W":  { "rows": r, "cols": c, "data": [hex-float strings, row-major] },
//     "K0": ..., "V0": ... }
//
// Hex floats ("1.8p+1", as printed by std::to_chars) round-trip every finite double exactly. The codebook
// and preserved facts are regenerated from the seeds in "config"; K0 and V0
// are stored anyway and checked against the regenerated frame on load.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "editmark/toymodel.hpp"

namespace editmark {

inline constexpr int kModelFormatVersion = 1;

nlohmann::ordered_json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

std::string serialize_model(const ModelState& model);
// Throws kParse on malformed text or a frame that disagrees with its seeds.
ModelState deserialize_model(const std::string& text);

void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

// Whole-file helpers; throw kIo.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace editmark
