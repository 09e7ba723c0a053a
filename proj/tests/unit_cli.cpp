// CLI contract tests. The binary path arrives as argv[1] (set by ctest).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string g_cli;
std::string g_dir;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_SUITE("cli exit codes") {
  TEST_CASE("params audit succeeds") {
    CHECK(run("params --k 1") == 0);
    CHECK(run("params --k 4") == 0);
  }

  TEST_CASE("usage errors exit 2") {
    CHECK(run("synth --n 0 --out " + g_dir + "/bad") == 2);
    CHECK(run("params --k 0") == 2);
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("saliency --checkpoint x.ckpt --volume y.npy --class 7 --out " +
              g_dir + "/s") == 2);
  }

  TEST_CASE("io errors exit 3") {
    CHECK(run("train --train-dir " + g_dir + "/missing --out " + g_dir + "/t") == 3);
    CHECK(run("eval --checkpoint " + g_dir + "/none.ckpt --data " + g_dir +
              " --out " + g_dir + "/e") == 3);
    CHECK(run("saliency --checkpoint " + g_dir + "/none.ckpt --volume " + g_dir +
              "/none.npy --class 1 --out " + g_dir + "/s2") == 3);
  }
}

TEST_SUITE("cli behaviour") {
  TEST_CASE("synth is deterministic across runs") {
    const std::string a = g_dir + "/synth_a", b = g_dir + "/synth_b";
    REQUIRE(run("synth --n 5 --slices 3 --size 32 --lesion-rate 0.5 --seed 7 --out " + a) == 0);
    REQUIRE(run("synth --n 5 --slices 3 --size 32 --lesion-rate 0.5 --seed 7 --out " + b) == 0);
    CHECK(slurp(a + "/manifest.json") == slurp(b + "/manifest.json"));
    CHECK(slurp(a + "/volumes/0003.npy") == slurp(b + "/volumes/0003.npy"));
    CHECK(slurp(a + "/labels-lesion.csv") == slurp(b + "/labels-lesion.csv"));
  }

  TEST_CASE("lesion-rate 0 writes an all-zero labels file") {
    const std::string d = g_dir + "/synth_neg";
    REQUIRE(run("synth --n 6 --slices 3 --size 32 --lesion-rate 0 --seed 3 --out " + d) == 0);
    std::ifstream in(d + "/labels-lesion.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
      if (!line.empty()) CHECK(line.substr(line.size() - 1) == "0");
  }

  TEST_CASE("config file with unknown keys is rejected") {
    const std::string cfg = g_dir + "/bad_cfg.json";
    std::ofstream(cfg) << "{\"model\": {\"k\": 1}, \"mystery\": 3}";
    CHECK(run("train --config " + cfg + " --out " + g_dir + "/t2") == 2);
  }

  TEST_CASE("train writes the resolved config, flags override the file") {
    const std::string tr = g_dir + "/ds_tr", va = g_dir + "/ds_va";
    REQUIRE(run("synth --n 8 --slices 3 --size 64 --lesion-rate 0.5 --seed 21 --out " + tr) == 0);
    REQUIRE(run("synth --n 6 --slices 3 --size 64 --lesion-rate 0.5 --seed 22 --out " + va) == 0);
    const std::string cfg = g_dir + "/train_cfg.json";
    std::ofstream(cfg)
        << "{\"model\": {\"k\": 1, \"stages\": 3, \"input_size\": [64, 64], "
           "\"dropout\": 0.2},"
           " \"train\": {\"lr\": 0.001, \"epochs\": 1, \"orientation\": \"axial\"},"
           " \"data\": {\"train_dir\": \"" + tr + "\", \"val_dir\": \"" + va + "\"}}";
    const std::string out = g_dir + "/train_run";
    REQUIRE(run("train --config " + cfg + " --epochs 2 --out " + out) == 0);
    std::ifstream rf(out + "/resolved.json");
    nlohmann::json resolved;
    rf >> resolved;
    CHECK(resolved["train"]["epochs"] == 2);  // flag wins
    CHECK(resolved["train"]["lr"] == 0.001);  // file value kept
    CHECK(fs::exists(out + "/checkpoint.ckpt"));
    CHECK(fs::exists(out + "/history.csv"));
    CHECK(fs::exists(out + "/scale.json"));
    std::ifstream hist(out + "/history.csv");
    std::string line;
    int rows = 0;
    while (std::getline(hist, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 3);  // header + 2 epochs
  }

  TEST_CASE("crossval emits one report per fold plus a summary") {
    const std::string ds = g_dir + "/ds_cv";
    REQUIRE(run("synth --n 12 --slices 3 --size 64 --lesion-rate 0.5 --seed 31 --out " + ds) == 0);
    const std::string cfg = g_dir + "/cv_cfg.json";
    std::ofstream(cfg)
        << "{\"model\": {\"k\": 1, \"stages\": 3, \"input_size\": [64, 64], "
           "\"dropout\": 0.2},"
           " \"train\": {\"epochs\": 1, \"orientation\": \"axial\"},"
           " \"data\": {\"dataset_dir\": \"" + ds + "\"},"
           " \"crossval\": {\"k\": 3, \"seed\": 1}}";
    const std::string out = g_dir + "/cv_run";
    REQUIRE(run("crossval --config " + cfg + " --out " + out) == 0);
    for (int f = 0; f < 3; ++f) {
      CHECK(fs::exists(out + "/fold_" + std::to_string(f) + "_metrics.json"));
      CHECK(fs::exists(out + "/roc_fold_" + std::to_string(f) + ".csv"));
    }
    CHECK_FALSE(fs::exists(out + "/fold_3_metrics.json"));
    std::ifstream sf(out + "/crossval_summary.csv");
    std::string line;
    int rows = 0;
    bool mean_row = false;
    while (std::getline(sf, line)) {
      if (!line.empty()) ++rows;
      if (line.rfind("mean,", 0) == 0) mean_row = true;
    }
    CHECK(rows == 5);  // header + 3 folds + mean
    CHECK(mean_row);
  }
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: unit_cli <path-to-elnet-binary> [doctest args]\n");
    return 1;
  }
  g_cli = argv[1];
  g_dir = (fs::temp_directory_path() / "elnet_cli_tests").string();
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  return ctx.run();
}
