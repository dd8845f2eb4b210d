#include "cpdalign/embeddings.hpp"
#include "cpdalign/serialization.hpp"

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace cpdalign;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the installed binary with stderr folded into the captured output.
Run run(const std::string& args) {
  const std::string command = std::string("\"") + CPDALIGN_BINARY + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

double p_at_1(const std::string& eval_output) {
  const auto pos = eval_output.find("P@1 ");
  REQUIRE(pos != std::string::npos);
  return std::stod(eval_output.substr(pos + 4));
}

}  // namespace

TEST_CASE("synth, align, eval and induce through the command line") {
  const fs::path root = fs::temp_directory_path() / "cpdalign_cli_integration";
  fs::remove_all(root);
  const fs::path data = root / "data";
  const fs::path out = root / "out";

  Run r = run("synth --n 600 --dim 20 --noise 0.01 --seed 4 --clusters 6 --out-dir " + q(data));
  REQUIRE_MESSAGE(r.code == 0, r.out);

  // Start from the planted map with a moderate perturbation.
  const SimilarityTransform planted = transform_from_json(read_json(data / "planted.json"));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.5 / std::sqrt(20.0));
  Matrix e(20, 20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 0; j < 20; ++j) e(i, j) = g(rng);
  }
  fs::create_directories(out);
  save_matrix((Matrix::Identity(20, 20) + e) * planted.row_map(), root / "init.vec");

  r = run("align --src " + q(data / "src.vec") + " --tgt " + q(data / "tgt.vec") + " --gold " + q(data / "gold.tsv") +
          " --init-map " + q(root / "init.vec") + " --out-dir " + q(out) + " --max-refine-iters 4");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("iteration 0") != std::string::npos);
  const Json report = read_json(out / "report.json");
  CHECK(report.at("p_at_1").at("precision").get<double>() >= 0.95);
  CHECK(fs::exists(out / "transform_forward.json") == (report.at("chosen_iteration").get<int>() > 0));

  r = run("eval --src-mapped " + q(out / "src_mapped.vec") + " --tgt " + q(out / "tgt.vec") + " --gold " +
          q(data / "gold.tsv"));
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(p_at_1(r.out) >= 0.9);
  CHECK(r.out.find("OOV 0") != std::string::npos);

  r = run("induce --src " + q(out / "src_mapped.vec") + " --tgt " + q(out / "tgt.vec") + " --out " +
          q(root / "dict.tsv") + " --induce-limit 100");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  std::ifstream dict(root / "dict.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(dict, line)) ++lines;
  CHECK(lines > 50);
  CHECK(lines <= 100);
}

TEST_CASE("command-line exit codes") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("align --src a.vec").code == 2);
  CHECK(run("align --src a.vec --tgt b.vec --out-dir o --skip-gan --checkpoint epoch:2").code == 2);
  CHECK(run("eval --src-mapped /nonexistent.vec --tgt /nonexistent.vec --gold /nonexistent.tsv").code == 1);
}
