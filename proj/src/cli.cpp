#include "cpdalign/cli.hpp"

#include "cpdalign/embeddings.hpp"
#include "cpdalign/errors.hpp"
#include "cpdalign/metrics.hpp"
#include "cpdalign/pipeline.hpp"
#include "cpdalign/serialization.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>

namespace cpdalign {

namespace fs = std::filesystem;

namespace {

struct SynthOptions {
  std::size_t n = 2000;
  std::size_t dim = 50;
  double noise = 0.01;
  std::uint64_t seed = 0;
  std::string kind = "orthogonal";
  std::size_t clusters = 10;
  std::string out_dir;
};

struct AlignOptions {
  std::string src;
  std::string tgt;
  std::string out_dir;
  std::string gold;
  std::size_t max_vocab = 200000;
  std::string refine = "symmetric";
  std::string checkpoint = "best";
  std::string cpd_mode = "similarity";
  std::string init_map;
  bool skip_gan = false;
  bool no_correspond = false;
  bool no_transform = false;
  bool renormalize = false;
  bool quiet = false;
  PipelineConfig config;
};

struct EvalOptions {
  std::string src_mapped;
  std::string tgt;
  std::string gold;
  std::size_t k = 10;
  std::size_t max_vocab = 200000;
};

struct InduceOptions {
  std::string src;
  std::string tgt;
  std::string out;
  std::string forward;
  std::string backward;
  std::size_t max_vocab = 200000;
  CslsParams csls;
};

EmbeddingSpace load_space(const std::string& path, std::size_t max_vocab, std::ostream& err) {
  VecLoadResult loaded = load_vec(path, max_vocab);
  if (loaded.duplicates_skipped > 0) {
    err << path << ": skipped " << loaded.duplicates_skipped << " duplicate tokens\n";
  }
  return std::move(loaded.space);
}

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const SynthPair pair = synth_pair(o.n, o.dim, o.noise, o.seed, parse_synth_kind(o.kind), o.clusters);
  save_synth(pair, o.out_dir);
  out << "wrote " << (fs::path(o.out_dir) / "src.vec").string() << ", tgt.vec, gold.tsv, planted.json\n";
  return kExitOk;
}

int cmd_align(AlignOptions o, std::ostream& out, std::ostream& err) {
  PipelineConfig& c = o.config;
  c.refine = parse_refine_mode(o.refine);
  c.checkpoint = CheckpointPolicy::parse(o.checkpoint);
  c.cpd.mode = parse_transform_mode(o.cpd_mode);
  c.run_correspond = !o.no_correspond;
  c.run_transform = !o.no_transform;
  c.run_align = !o.skip_gan && o.init_map.empty();
  if (!c.run_align && c.checkpoint.kind == CheckpointPolicy::Kind::epoch) {
    throw ConfigError("--checkpoint epoch:N needs the adversarial stage; drop --skip-gan / --init-map");
  }

  const EmbeddingSpace source = normalize(load_space(o.src, o.max_vocab, err), o.renormalize);
  const EmbeddingSpace target = normalize(load_space(o.tgt, o.max_vocab, err), o.renormalize);
  std::optional<GoldDictionary> gold;
  if (!o.gold.empty()) gold = GoldDictionary::load(o.gold);

  std::optional<std::pair<LinearMap, LinearMap>> init;
  if (!o.init_map.empty()) {
    LinearMap f = load_matrix(o.init_map);
    if (f.rows() != source.dim() || f.cols() != source.dim()) throw ConfigError("--init-map has the wrong shape");
    Eigen::FullPivLU<Matrix> lu(f);
    if (!lu.isInvertible()) throw ConfigError("--init-map is singular");
    init.emplace(f, lu.inverse());
  }

  LogSink log;
  if (!o.quiet) log = [&err](const std::string& line) { err << line << '\n'; };
  PipelineResult result = run_actg(source, target, c, init, log);
  if (gold) evaluate_result(result, source, target, *gold);
  generate_output(result, source, target, o.out_dir);

  const std::string hash = digest(to_json(c).dump());
  for (const auto& cp : result.report.align_checkpoints) {
    save_checkpoint(cp, hash, fs::path(o.out_dir) / "checkpoints", "epoch_" + std::to_string(cp.epoch));
  }
  for (const auto& w : result.report.warnings) err << "warning: " << w << '\n';
  out << "chosen iteration " << result.report.chosen_iteration << ", dictionary " << result.dictionary.size()
      << " pairs";
  if (result.report.p_at_1) out << ", P@1 " << result.report.p_at_1->precision;
  out << '\n';
  return kExitOk;
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  const EmbeddingSpace mapped = load_space(o.src_mapped, o.max_vocab, err);
  const EmbeddingSpace target = load_space(o.tgt, o.max_vocab, err);
  if (mapped.dim() != target.dim()) throw ConfigError("--src-mapped and --tgt have different dimensions");
  const GoldDictionary gold = GoldDictionary::load(o.gold);
  if (gold.empty()) throw ConfigError("gold dictionary is empty");
  MappedPair pair{mapped.vectors(), target.vectors(), mapped.vectors(), target.vectors()};
  const Predictions predictions = predict_translations(pair, mapped.vocab(), target.vocab(), gold, 5, o.k, false);
  const PrecisionReport p1 = evaluate_p_at_k(predictions, gold, 1);
  const PrecisionReport p5 = evaluate_p_at_k(predictions, gold, 5);
  out << "P@1 " << p1.precision << " (" << p1.hits << "/" << p1.queries << ")\n";
  out << "P@5 " << p5.precision << " (" << p5.hits << "/" << p5.queries << ")\n";
  out << "OOV " << p1.oov << '\n';
  return kExitOk;
}

int cmd_induce(const InduceOptions& o, std::ostream& out, std::ostream& err) {
  const EmbeddingSpace source = load_space(o.src, o.max_vocab, err);
  const EmbeddingSpace target = load_space(o.tgt, o.max_vocab, err);
  if (source.dim() != target.dim()) throw ConfigError("--src and --tgt have different dimensions");
  const auto dim = source.dim();
  LinearMap f = o.forward.empty() ? LinearMap::Identity(dim, dim) : load_matrix(o.forward);
  LinearMap g = o.backward.empty() ? LinearMap::Identity(dim, dim) : load_matrix(o.backward);
  if (f.rows() != dim || f.cols() != dim || g.rows() != dim || g.cols() != dim) {
    throw ConfigError("maps must be " + std::to_string(dim) + "x" + std::to_string(dim));
  }
  const SeedDictionary dict = induce_dictionary(source.vectors(), target.vectors(), f, g, o.csls);
  write_dictionary_tsv(dict, source.vocab(), target.vocab(), o.out);
  if (dict.empty()) err << "warning: induced dictionary is empty\n";
  out << "wrote " << dict.size() << " pairs to " << o.out << '\n';
  return kExitOk;
}

bool mentions(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// Inserts the entries of the subcommand's --config file as flags, skipping
// keys already given on the command line.
std::vector<std::string> with_config_defaults(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const CLI::App* candidate : app.get_subcommands({})) {
    if (candidate->get_name() == args.front()) sub = candidate;
  }
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!fs::is_regular_file(path)) throw ConfigError("config file '" + path + "' not found");

  std::vector<std::string> out{args.front()};
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) throw ConfigError("config file: sections are not supported ('" + item.fullname() + "')");
    const std::string flag = "--" + item.name;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || item.name == "config") throw ConfigError("config file: unknown key '" + item.name + "'");
    if (mentions(args, flag)) continue;
    if (opt->get_expected_min() == 0) {
      if (item.inputs.size() == 1 && CLI::detail::to_flag_value(item.inputs.front()) > 0) out.push_back(flag);
      continue;
    }
    out.push_back(flag);
    out.insert(out.end(), item.inputs.begin(), item.inputs.end());
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised cross-lingual embedding alignment", "cpdalign"};
  app.require_subcommand(1);

  std::string config_file;
  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic embedding pair with a planted transform");
  s->add_option("--config", config_file, "key=value defaults file; command-line flags take precedence");
  s->add_option("--n", synth.n, "Rows per space")->capture_default_str();
  s->add_option("--dim", synth.dim, "Dimension")->capture_default_str();
  s->add_option("--noise", synth.noise, "Isotropic noise scale on the target")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--kind", synth.kind, "orthogonal | similarity | affine")->capture_default_str();
  s->add_option("--clusters", synth.clusters)->capture_default_str();
  s->add_option("--out-dir", synth.out_dir)->required();

  AlignOptions al;
  AlignConfig& ac = al.config.align;
  auto* a = app.add_subcommand("align", "Run the full alignment pipeline");
  a->add_option("--config", config_file, "key=value defaults file; command-line flags take precedence");
  a->add_option("--src", al.src)->required();
  a->add_option("--tgt", al.tgt)->required();
  a->add_option("--out-dir", al.out_dir)->required();
  a->add_option("--gold", al.gold, "Gold dictionary for P@k");
  a->add_option("--max-vocab", al.max_vocab)->capture_default_str();
  a->add_option("--lambda-cyc", ac.lambda_cyc)->capture_default_str();
  a->add_option("--beta", ac.beta_orth, "Orthogonalization step")->capture_default_str();
  a->add_option("--disc-vocab", ac.disc_vocab_limit)->capture_default_str();
  a->add_option("--dropout", ac.discriminator.dropout)->capture_default_str();
  a->add_option("--disc-hidden", ac.discriminator.hidden, "Hidden layer sizes")->capture_default_str();
  a->add_option("--epochs", ac.epochs)->capture_default_str();
  a->add_option("--epoch-size", ac.epoch_size)->capture_default_str();
  a->add_option("--batch-size", ac.batch_size)->capture_default_str();
  a->add_option("--csls-k", al.config.csls.k)->capture_default_str();
  a->add_option("--induce-limit", al.config.csls.candidate_limit)->capture_default_str();
  a->add_option("--cpd-points", al.config.cpd.point_limit)->capture_default_str();
  a->add_option("--cpd-w", al.config.cpd.outlier_weight)->capture_default_str();
  a->add_option("--cpd-mode", al.cpd_mode, "similarity | affine")->capture_default_str();
  a->add_option("--cpd-max-iter", al.config.cpd.max_iter)->capture_default_str();
  a->add_option("--cpd-tol", al.config.cpd.tol)->capture_default_str();
  a->add_option("--max-refine-iters", al.config.max_refine_iters)->capture_default_str();
  a->add_option("--refine", al.refine, "symmetric | procrustes")->capture_default_str();
  a->add_option("--checkpoint", al.checkpoint, "best | epoch:N")->capture_default_str();
  a->add_option("--init-map", al.init_map, "Initial source->target map (.vec matrix); skips the adversarial stage");
  a->add_option("--seed", ac.seed)->capture_default_str();
  a->add_flag("--skip-gan", al.skip_gan, "Start refinement from identity maps");
  a->add_flag("--no-correspond", al.no_correspond);
  a->add_flag("--no-transform", al.no_transform);
  a->add_flag("--correspond-from-original", al.config.correspond_from_original);
  a->add_flag("--renormalize", al.renormalize, "Unit-normalize again after centering");
  a->add_flag("--record-timings", al.config.record_timings);
  a->add_flag("--quiet", al.quiet);

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "P@1 / P@5 of mapped source embeddings against a gold dictionary");
  e->add_option("--config", config_file, "key=value defaults file; command-line flags take precedence");
  e->add_option("--src-mapped", ev.src_mapped)->required();
  e->add_option("--tgt", ev.tgt)->required();
  e->add_option("--gold", ev.gold)->required();
  e->add_option("--csls-k", ev.k)->capture_default_str();
  e->add_option("--max-vocab", ev.max_vocab)->capture_default_str();

  InduceOptions in;
  auto* d = app.add_subcommand("induce", "Mutual nearest-neighbour dictionary between two spaces");
  d->add_option("--config", config_file, "key=value defaults file; command-line flags take precedence");
  d->add_option("--src", in.src)->required();
  d->add_option("--tgt", in.tgt)->required();
  d->add_option("--out", in.out)->required();
  d->add_option("--forward", in.forward, "Source->target map (.vec matrix); identity if omitted");
  d->add_option("--backward", in.backward, "Target->source map (.vec matrix); identity if omitted");
  d->add_option("--csls-k", in.csls.k)->capture_default_str();
  d->add_option("--induce-limit", in.csls.candidate_limit)->capture_default_str();
  d->add_option("--max-vocab", in.max_vocab)->capture_default_str();

  try {
    const std::vector<std::string> expanded = with_config_defaults(app, args);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n';
    for (auto* sub : app.get_subcommands()) {
      if (sub->parsed()) {
        err << "see: cpdalign " << sub->get_name() << " --help\n";
        return kExitUsage;
      }
    }
    err << "see: cpdalign --help\n";
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (a->parsed()) return cmd_align(al, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
    return cmd_induce(in, out, err);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cpdalign
