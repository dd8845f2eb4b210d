#pragma once

#include "cpdalign/align.hpp"
#include "cpdalign/correspond.hpp"
#include "cpdalign/embeddings.hpp"
#include "cpdalign/log.hpp"
#include "cpdalign/metrics.hpp"
#include "cpdalign/transform.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cpdalign {

struct PipelineConfig {
  bool run_align = true;
  AlignConfig align;
  CheckpointPolicy checkpoint;
  bool run_correspond = true;
  bool run_transform = true;
  bool correspond_from_original = false;
  RefineMode refine = RefineMode::symmetric;
  CslsParams csls;
  CpdConfig cpd;
  std::size_t max_refine_iters = 10;
  bool record_timings = false;

  void validate() const;
};

/// Tracks the refinement criterion and decides when to stop: after two
/// consecutive values that are each below the best value seen so far.
class StopRule {
 public:
  // Returns true when the loop should stop after this value.
  bool push(double criterion);
  std::size_t best_index() const { return best_; }
  double best_value() const { return best_value_; }
  std::size_t size() const { return count_; }

 private:
  std::size_t count_ = 0;
  std::size_t best_ = 0;
  double best_value_ = 0.0;
  std::size_t below_ = 0;
};

struct IterationRecord {
  double criterion = 0.0;
  std::size_t dict_size = 0;
  std::map<std::string, double> timings;  // seconds per stage; only when requested
};

struct PipelineReport {
  PipelineConfig config;
  std::vector<IterationRecord> iterations;  // iterations[0] is the state after Align
  std::size_t chosen_iteration = 0;
  std::vector<AlignCheckpoint> align_checkpoints;
  std::size_t align_selected = 0;
  std::optional<PrecisionReport> p_at_1;
  std::optional<PrecisionReport> p_at_5;
  std::vector<std::string> warnings;
};

struct PipelineResult {
  MappedPair initial;  // state after Align
  MappedPair final_state;
  SeedDictionary dictionary;
  std::optional<CpdState> forward_fit;  // transforms of the restored iterate
  std::optional<CpdState> backward_fit;
  PipelineReport report;
};

/// Align, then Correspond/Transform until the criterion stops improving,
/// restoring the best iterate. `initial_maps` (F, G) replace Align when given.
/// Both spaces must be normalized.
PipelineResult run_actg(const EmbeddingSpace& source, const EmbeddingSpace& target, const PipelineConfig& config,
                        const std::optional<std::pair<LinearMap, LinearMap>>& initial_maps = std::nullopt,
                        const LogSink& log = {});

/// Fills the precision fields of the report from `gold` (bidirectional
/// retrieval over the full vocabularies).
void evaluate_result(PipelineResult& result, const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const GoldDictionary& gold);

/// Writes src.vec, tgt.vec, src_mapped.vec, tgt_mapped.vec, dictionary.tsv,
/// report.json and the fitted transforms into `out_dir`.
void generate_output(const PipelineResult& result, const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const std::filesystem::path& out_dir);

}  // namespace cpdalign
