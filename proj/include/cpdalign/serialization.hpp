#pragma once

#include "cpdalign/align.hpp"
#include "cpdalign/embeddings.hpp"
#include "cpdalign/pipeline.hpp"
#include "cpdalign/transform.hpp"

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace cpdalign {

using Json = nlohmann::ordered_json;

Json to_json(const PipelineConfig& config);
Json to_json(const PipelineReport& report);
Json to_json(const CpdState& fit);
Json to_json(const SimilarityTransform& transform);

SimilarityTransform transform_from_json(const Json& j);

void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// FNV-1a digest of a string, as 16 hex digits.
std::string digest(const std::string& text);

/// Matrix in .vec layout with row labels 0..D-1.
void save_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix(const std::filesystem::path& path);

/// Writes <stem>_F.vec, <stem>_G.vec and <stem>.json (epoch, criterion,
/// config hash) into `dir`.
void save_checkpoint(const AlignCheckpoint& cp, const std::string& config_hash, const std::filesystem::path& dir,
                     const std::string& stem);

/// Loads the F and G maps written by save_checkpoint.
std::pair<LinearMap, LinearMap> load_checkpoint_maps(const std::filesystem::path& dir, const std::string& stem);

/// Writes gold.tsv, planted.json, src.vec and tgt.vec into `dir`.
void save_synth(const SynthPair& pair, const std::filesystem::path& dir);

}  // namespace cpdalign
