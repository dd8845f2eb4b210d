#include "cpdalign/serialization.hpp"

#include "cpdalign/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>

namespace cpdalign {

namespace {

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Json precision_json(const PrecisionReport& p) {
  return Json{{"precision", p.precision}, {"queries", p.queries}, {"hits", p.hits}};
}

}  // namespace

Json to_json(const PipelineConfig& c) {
  Json align{{"enabled", c.run_align},
             {"checkpoint", c.checkpoint.to_string()},
             {"lambda_cyc", c.align.lambda_cyc},
             {"beta", c.align.beta_orth},
             {"epochs", c.align.epochs},
             {"epoch_size", c.align.epoch_size},
             {"batch_size", c.align.batch_size},
             {"disc_steps", c.align.disc_steps},
             {"gen_learning_rate", c.align.gen_learning_rate},
             {"disc_learning_rate", c.align.disc_learning_rate},
             {"lr_decay", c.align.lr_decay},
             {"lr_shrink", c.align.lr_shrink},
             {"min_learning_rate", c.align.min_learning_rate},
             {"disc_vocab", c.align.disc_vocab_limit},
             {"label_smoothing", c.align.label_smoothing},
             {"disc_hidden", c.align.discriminator.hidden},
             {"dropout", c.align.discriminator.dropout},
             {"leaky_slope", c.align.discriminator.leaky_slope},
             {"seed", c.align.seed}};
  return Json{{"align", align},
              {"correspond", {{"enabled", c.run_correspond},
                              {"refine", std::string(to_string(c.refine))},
                              {"from_original", c.correspond_from_original}}},
              {"transform", {{"enabled", c.run_transform},
                             {"mode", std::string(to_string(c.cpd.mode))},
                             {"outlier_weight", c.cpd.outlier_weight},
                             {"max_iter", c.cpd.max_iter},
                             {"tol", c.cpd.tol},
                             {"points", c.cpd.point_limit}}},
              {"csls_k", c.csls.k},
              {"induce_limit", c.csls.candidate_limit},
              {"max_refine_iters", c.max_refine_iters}};
}

Json to_json(const PipelineReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  Json iterations = Json::array();
  for (const auto& it : r.iterations) {
    Json e{{"criterion", it.criterion}, {"dict_size", it.dict_size}};
    if (!it.timings.empty()) {
      Json t = Json::object();
      for (const auto& [stage, seconds] : it.timings) t[stage] = seconds;
      e["timings"] = t;
    }
    iterations.push_back(std::move(e));
  }
  j["iterations"] = iterations;
  j["chosen_iteration"] = r.chosen_iteration;
  if (!r.align_checkpoints.empty()) {
    Json cps = Json::array();
    for (const auto& cp : r.align_checkpoints) {
      cps.push_back(Json{{"epoch", cp.epoch},
                         {"criterion", cp.criterion},
                         {"valid", cp.valid},
                         {"disc_accuracy_source", cp.disc_accuracy_source},
                         {"disc_accuracy_target", cp.disc_accuracy_target}});
    }
    j["align"] = Json{{"selected_epoch", r.align_checkpoints[r.align_selected].epoch}, {"checkpoints", cps}};
  }
  if (r.p_at_1) j["p_at_1"] = precision_json(*r.p_at_1);
  if (r.p_at_5) j["p_at_5"] = precision_json(*r.p_at_5);
  if (r.p_at_1) j["oov_count"] = r.p_at_1->oov;
  j["warnings"] = r.warnings;
  return j;
}

Json to_json(const SimilarityTransform& t) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < t.r.rows(); ++i) {
    for (Eigen::Index k = 0; k < t.r.cols(); ++k) rows.push_back(t.r(i, k));
  }
  return Json{{"mode", std::string(to_string(t.mode))}, {"dim", t.r.rows()}, {"R", rows}, {"s", t.s},
              {"t", vector_json(t.t)}};
}

Json to_json(const CpdState& fit) {
  Json j = to_json(fit.transform);
  j["sigma2"] = fit.sigma2;
  j["iterations"] = fit.iterations;
  j["objective_trace"] = fit.trace;
  return j;
}

SimilarityTransform transform_from_json(const Json& j) {
  try {
    SimilarityTransform t;
    t.mode = parse_transform_mode(j.at("mode").get<std::string>());
    const auto dim = j.at("dim").get<Eigen::Index>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto tv = j.at("t").get<std::vector<double>>();
    if (dim < 1 || r.size() != static_cast<std::size_t>(dim * dim) || tv.size() != static_cast<std::size_t>(dim)) {
      throw ParseError("transform: inconsistent sizes", 0);
    }
    t.r.resize(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index k = 0; k < dim; ++k) t.r(i, k) = r[static_cast<std::size_t>(i * dim + k)];
    }
    t.s = j.at("s").get<double>();
    t.t = Eigen::Map<const Vector>(tv.data(), dim);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("transform: ") + e.what(), 0);
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::string digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < m.rows(); ++i) labels.push_back(std::to_string(i));
  save_vec(EmbeddingSpace(std::move(labels), m), path);
}

Matrix load_matrix(const std::filesystem::path& path) {
  auto loaded = load_vec(path, static_cast<std::size_t>(-1));
  return loaded.space.vectors();
}

void save_checkpoint(const AlignCheckpoint& cp, const std::string& config_hash, const std::filesystem::path& dir,
                     const std::string& stem) {
  std::filesystem::create_directories(dir);
  save_matrix(cp.forward, dir / (stem + "_F.vec"));
  save_matrix(cp.backward, dir / (stem + "_G.vec"));
  write_json(Json{{"epoch", cp.epoch},
                  {"criterion", cp.criterion},
                  {"valid", cp.valid},
                  {"disc_accuracy_source", cp.disc_accuracy_source},
                  {"disc_accuracy_target", cp.disc_accuracy_target},
                  {"config_hash", config_hash}},
             dir / (stem + ".json"));
}

std::pair<LinearMap, LinearMap> load_checkpoint_maps(const std::filesystem::path& dir, const std::string& stem) {
  LinearMap f = load_matrix(dir / (stem + "_F.vec"));
  LinearMap g = load_matrix(dir / (stem + "_G.vec"));
  if (f.rows() != f.cols() || g.rows() != g.cols() || f.rows() != g.rows()) {
    throw ParseError("checkpoint maps must be square and of equal size", 0);
  }
  return {std::move(f), std::move(g)};
}

void save_synth(const SynthPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_vec(pair.source, dir / "src.vec");
  save_vec(pair.target, dir / "tgt.vec");
  std::ofstream gold(dir / "gold.tsv", std::ios::binary);
  if (!gold) throw Error("cannot write gold dictionary in '" + dir.string() + "'");
  for (const auto& [s, t] : pair.gold_tokens()) gold << s << '\t' << t << '\n';
  if (!gold) throw Error("write failed for gold dictionary");
  Json planted = to_json(pair.planted);
  planted["noise_sigma"] = pair.noise_sigma;
  write_json(planted, dir / "planted.json");
}

}  // namespace cpdalign
