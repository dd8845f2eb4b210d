#include "cpdalign/cli.hpp"
#include "cpdalign/embeddings.hpp"
#include "cpdalign/serialization.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace cpdalign;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cpdalign_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

fs::path small_synth(const std::string& name) {
  const fs::path dir = scratch(name);
  REQUIRE(cli({"synth", "--n", "120", "--dim", "6", "--noise", "0", "--seed", "7", "--clusters", "4", "--out-dir",
               dir.string()})
              .code == kExitOk);
  return dir;
}

std::vector<std::string> quick_align(const fs::path& data, const fs::path& out) {
  return {"align", "--src", (data / "src.vec").string(), "--tgt", (data / "tgt.vec").string(), "--out-dir",
          out.string(), "--gold", (data / "gold.tsv").string(), "--epochs", "1", "--epoch-size", "320",
          "--disc-hidden", "8", "--max-refine-iters", "2", "--quiet"};
}

}  // namespace

TEST_CASE("synth writes four files and reloads to the same gold") {
  const fs::path dir = small_synth("synth");
  for (const char* name : {"src.vec", "tgt.vec", "gold.tsv", "planted.json"}) CHECK(fs::exists(dir / name));
  const SynthPair p = synth_pair(120, 6, 0.0, 7, SynthKind::orthogonal, 4);
  const GoldDictionary gold = GoldDictionary::load(dir / "gold.tsv");
  const auto tokens = p.gold_tokens();
  REQUIRE(gold.size() == tokens.size());
  for (const auto& [s, t] : tokens) CHECK(gold.targets(s).count(t) == 1);
}

TEST_CASE("synth is byte reproducible") {
  const fs::path a = small_synth("synth_a");
  const fs::path b = small_synth("synth_b");
  for (const char* name : {"src.vec", "tgt.vec", "gold.tsv", "planted.json"}) CHECK(slurp(a / name) == slurp(b / name));
}

TEST_CASE("synth similarity kind plants a non-unit scale") {
  const fs::path dir = scratch("synth_sim");
  REQUIRE(cli({"synth", "--n", "50", "--dim", "4", "--kind", "similarity", "--seed", "2", "--out-dir", dir.string()})
              .code == kExitOk);
  CHECK(read_json(dir / "planted.json").at("s").get<double>() != 1.0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"synth"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "many", "--out-dir", "x"}).code == kExitUsage);
  CHECK(cli({"synth", "--kind", "projective", "--out-dir", scratch("bad_kind").string()}).code == kExitUsage);
}

TEST_CASE("help exits with 0") {
  const Run r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("align") != std::string::npos);
}

TEST_CASE("align rejects --skip-gan with an epoch checkpoint") {
  const fs::path data = small_synth("conflict");
  auto args = quick_align(data, scratch("conflict_out"));
  args.insert(args.end(), {"--skip-gan", "--checkpoint", "epoch:1"});
  const Run r = cli(args);
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("epoch") != std::string::npos);
}

TEST_CASE("align on missing files is a runtime failure") {
  const Run r = cli({"align", "--src", "/nonexistent/a.vec", "--tgt", "/nonexistent/b.vec", "--out-dir",
                     scratch("missing").string()});
  CHECK(r.code == kExitRuntime);
}

TEST_CASE("minimal align run writes its artifacts") {
  const fs::path data = small_synth("align");
  const fs::path out = scratch("align_out");
  auto args = quick_align(data, out);
  args.insert(args.end(), {"--refine", "procrustes"});
  const Run r = cli(args);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("P@1") != std::string::npos);
  for (const char* name : {"report.json", "dictionary.tsv", "src_mapped.vec", "tgt_mapped.vec"}) {
    CHECK(fs::exists(out / name));
  }
  CHECK(fs::exists(out / "checkpoints" / "epoch_0_F.vec"));
  CHECK(fs::exists(out / "checkpoints" / "epoch_1.json"));
  const Json report = read_json(out / "report.json");
  CHECK(report.at("config").at("correspond").at("refine") == "procrustes");
  CHECK(report.contains("p_at_1"));
}

TEST_CASE("align with an initial map skips the adversarial stage") {
  const fs::path data = small_synth("init");
  const fs::path out = scratch("init_out");
  const SynthPair p = synth_pair(120, 6, 0.0, 7, SynthKind::orthogonal, 4);
  save_matrix(p.planted_row_map(), out / "map.vec");
  auto args = quick_align(data, out);
  args.insert(args.end(), {"--init-map", (out / "map.vec").string()});
  REQUIRE(cli(args).code == kExitOk);
  CHECK_FALSE(read_json(out / "report.json").contains("align"));
}

TEST_CASE("align is byte reproducible") {
  const fs::path data = small_synth("repro");
  const fs::path a = scratch("repro_a");
  const fs::path b = scratch("repro_b");
  REQUIRE(cli(quick_align(data, a)).code == kExitOk);
  REQUIRE(cli(quick_align(data, b)).code == kExitOk);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "dictionary.tsv") == slurp(b / "dictionary.tsv"));
}

TEST_CASE("eval counts OOV gold sources") {
  const fs::path dir = scratch("eval");
  write(dir / "mapped.vec", "2 2\na 1 0\nb 0 1\n");
  write(dir / "tgt.vec", "2 2\nx 1 0\ny 0 1\n");
  write(dir / "gold.tsv", "a\tx\nb\ty\nc\tx\n");
  const Run r = cli({"eval", "--src-mapped", (dir / "mapped.vec").string(), "--tgt", (dir / "tgt.vec").string(),
                     "--gold", (dir / "gold.tsv").string(), "--csls-k", "1"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("P@1 0.666667 (2/3)") != std::string::npos);
  CHECK(r.out.find("OOV 1") != std::string::npos);
}

TEST_CASE("induce on identical files gives the identity dictionary") {
  const fs::path data = small_synth("induce");
  const fs::path dict = data / "dict.tsv";
  const Run r = cli({"induce", "--src", (data / "src.vec").string(), "--tgt", (data / "src.vec").string(), "--out",
                     dict.string(), "--induce-limit", "50"});
  REQUIRE(r.code == kExitOk);
  std::ifstream in(dict);
  std::string s, t;
  double score = 0.0;
  double last = 1e300;
  std::size_t lines = 0;
  while (in >> s >> t >> score) {
    CHECK(s == t);
    CHECK(score <= last);
    last = score;
    ++lines;
  }
  // Every induced pair is a self match; a word in a crowded cluster may fail
  // to be a mutual CSLS neighbour of itself and drop out.
  CHECK(lines <= 50);
  CHECK(lines >= 45);
}

TEST_CASE("config file values sit between flags and defaults") {
  const fs::path dir = scratch("config");
  write(dir / "synth.ini", "n=40\ndim=3\nseed=5\n");
  REQUIRE(cli({"synth", "--config", (dir / "synth.ini").string(), "--dim", "4", "--out-dir", (dir / "a").string()})
              .code == kExitOk);
  const auto loaded = load_vec(dir / "a" / "src.vec", 1000).space;
  CHECK(loaded.size() == 40);
  CHECK(loaded.dim() == 4);
  const SynthPair expected = synth_pair(40, 4, 0.01, 5, SynthKind::orthogonal, 10);
  CHECK(loaded.vocab() == expected.source.vocab());
}

TEST_CASE("config file errors are usage errors") {
  const fs::path dir = scratch("config_bad");
  write(dir / "bad.ini", "colour=blue\n");
  CHECK(cli({"synth", "--config", (dir / "bad.ini").string(), "--out-dir", dir.string()}).code == kExitUsage);
  CHECK(cli({"synth", "--config", (dir / "missing.ini").string(), "--out-dir", dir.string()}).code == kExitUsage);
}

TEST_CASE("config file can set flags and required options") {
  const fs::path data = small_synth("config_align");
  const fs::path out = scratch("config_align_out");
  write(out / "align.ini", "src=" + (data / "src.vec").string() + "\ntgt=" + (data / "tgt.vec").string() +
                               "\nout-dir=" + out.string() +
                               "\nskip-gan=true\nno-transform=true\nmax-refine-iters=1\nquiet=true\n");
  REQUIRE(cli({"align", "--config", (out / "align.ini").string()}).code == kExitOk);
  const Json report = read_json(out / "report.json");
  CHECK(report.at("config").at("align").at("enabled") == false);
  CHECK(report.at("config").at("transform").at("enabled") == false);
  CHECK(report.at("iterations").size() == 2);
}
