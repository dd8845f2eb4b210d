#include "cpdalign/pipeline.hpp"

#include "cpdalign/errors.hpp"
#include "cpdalign/serialization.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace cpdalign {

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string iteration_line(std::size_t it, const IterationRecord& rec) {
  std::ostringstream out;
  out << "refine iteration " << it << " criterion " << rec.criterion << " dict " << rec.dict_size;
  return out.str();
}

}  // namespace

void PipelineConfig::validate() const {
  if (max_refine_iters < 1) throw ConfigError("max_refine_iters must be >= 1");
  if (csls.k < 1) throw ConfigError("csls k must be >= 1");
  if (csls.candidate_limit < 1) throw ConfigError("induction limit must be >= 1");
  if (run_align) align.validate();
  cpd.validate();
}

bool StopRule::push(double criterion) {
  const std::size_t index = count_++;
  if (index == 0 || (std::isfinite(criterion) && criterion > best_value_)) {
    best_ = index;
    best_value_ = criterion;
    below_ = 0;
    return false;
  }
  return ++below_ >= 2;
}

PipelineResult run_actg(const EmbeddingSpace& source, const EmbeddingSpace& target, const PipelineConfig& config,
                        const std::optional<std::pair<LinearMap, LinearMap>>& initial_maps, const LogSink& log) {
  config.validate();
  if (source.empty() || target.empty()) throw ContractError("pipeline: empty embedding space");
  if (source.dim() != target.dim()) throw ContractError("pipeline: source and target dimensions differ");
  const Matrix& x = source.vectors();
  const Matrix& y = target.vectors();
  const auto dim = x.cols();

  PipelineResult result;
  PipelineReport& report = result.report;
  report.config = config;
  Stopwatch clock;

  LinearMap forward = LinearMap::Identity(dim, dim);
  LinearMap backward = LinearMap::Identity(dim, dim);
  if (initial_maps) {
    forward = initial_maps->first;
    backward = initial_maps->second;
  } else if (config.run_align) {
    AlignResult aligned = train_align(x, y, config.align, config.checkpoint, log);
    forward = std::move(aligned.forward);
    backward = std::move(aligned.backward);
    report.align_checkpoints = std::move(aligned.checkpoints);
    report.align_selected = aligned.selected;
    for (auto& w : aligned.warnings) report.warnings.push_back(std::move(w));
  }
  const double align_seconds = clock.lap();

  MappedPair state = MappedPair::from_maps(x, y, forward, backward);
  IterationRecord first;
  first.criterion = selection_criterion(state, config.csls);
  SeedDictionary dict = induce_dictionary(state, config.csls);
  first.dict_size = dict.size();
  if (config.record_timings) {
    first.timings["align"] = align_seconds;
    first.timings["generate"] = clock.lap();
  }
  if (log) log(iteration_line(0, first));
  report.iterations.push_back(first);

  StopRule rule;
  rule.push(first.criterion);
  result.initial = state;
  MappedPair best_state = state;
  SeedDictionary best_dict = dict;
  std::optional<CpdState> best_forward;
  std::optional<CpdState> best_backward;

  const std::size_t refine_iters = config.run_correspond || config.run_transform ? config.max_refine_iters : 0;
  for (std::size_t it = 1; it <= refine_iters; ++it) {
    if (dict.empty()) {
      report.warnings.push_back("refine iteration " + std::to_string(it) +
                                ": empty seed dictionary; kept iteration " + std::to_string(it - 1));
      break;
    }
    IterationRecord rec;
    Matrix xc;
    Matrix yc;
    try {
      clock.lap();
      if (config.run_correspond) {
        const Matrix& base_x = config.correspond_from_original ? x : state.source;
        const Matrix& base_y = config.correspond_from_original ? y : state.target;
        CorrespondResult c = correspond(base_x, base_y, dict, config.refine);
        xc = std::move(c.x);
        yc = std::move(c.y);
      } else {
        xc = state.source_mapped;
        yc = state.target;
      }
      if (config.record_timings) rec.timings["correspond"] = clock.lap();

      std::optional<CpdState> fwd;
      std::optional<CpdState> bwd;
      if (config.run_transform) {
        TransformStageResult t = apply_transform_stage(xc, yc, config.cpd);
        state = MappedPair{xc, yc, std::move(t.x), std::move(t.y)};
        fwd = std::move(t.forward);
        bwd = std::move(t.backward);
      } else {
        state = MappedPair{xc, yc, xc, yc};
      }
      if (config.record_timings) rec.timings["transform"] = clock.lap();

      rec.criterion = selection_criterion(state, config.csls);
      dict = induce_dictionary(state, config.csls);
      rec.dict_size = dict.size();
      if (config.record_timings) rec.timings["generate"] = clock.lap();

      if (log) log(iteration_line(it, rec));
      report.iterations.push_back(rec);
      const bool stop = rule.push(rec.criterion);
      if (rule.best_index() == it) {
        best_state = state;
        best_dict = dict;
        best_forward = std::move(fwd);
        best_backward = std::move(bwd);
      }
      if (stop) break;
    } catch (const StageError& e) {
      throw StageError("refine iteration " + std::to_string(it) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("refine iteration " + std::to_string(it) + ": " + e.what(), e.condition_estimate());
    }
  }

  report.chosen_iteration = rule.best_index();
  if (best_dict.empty()) report.warnings.push_back("final dictionary is empty");
  result.final_state = std::move(best_state);
  result.dictionary = std::move(best_dict);
  result.forward_fit = std::move(best_forward);
  result.backward_fit = std::move(best_backward);
  return result;
}

void evaluate_result(PipelineResult& result, const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const GoldDictionary& gold) {
  if (gold.empty()) throw ConfigError("gold dictionary is empty");
  const Predictions predictions = predict_translations(result.final_state, source.vocab(), target.vocab(), gold, 5,
                                                       result.report.config.csls.k, true);
  result.report.p_at_1 = evaluate_p_at_k(predictions, gold, 1);
  result.report.p_at_5 = evaluate_p_at_k(predictions, gold, 5);
}

void generate_output(const PipelineResult& result, const EmbeddingSpace& source, const EmbeddingSpace& target,
                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const MappedPair& s = result.final_state;
  save_vec(source.with_vectors(s.source), out_dir / "src.vec");
  save_vec(target.with_vectors(s.target), out_dir / "tgt.vec");
  save_vec(source.with_vectors(s.source_mapped), out_dir / "src_mapped.vec");
  save_vec(target.with_vectors(s.target_mapped), out_dir / "tgt_mapped.vec");
  write_dictionary_tsv(result.dictionary, source.vocab(), target.vocab(), out_dir / "dictionary.tsv");
  if (result.forward_fit) write_json(to_json(*result.forward_fit), out_dir / "transform_forward.json");
  if (result.backward_fit) write_json(to_json(*result.backward_fit), out_dir / "transform_backward.json");
  write_json(to_json(result.report), out_dir / "report.json");
}

}  // namespace cpdalign
