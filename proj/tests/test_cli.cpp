#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "aqi_test_cli";

// A city small enough that the whole pipeline runs in a few seconds.
constexpr const char* kTinyConfig = R"({
  "data_dir": "data",
  "synth": {"n_rows": 6, "n_cols": 6, "hours": 96, "n_ss": 12, "n_ms": 12, "n_roads": 4, "n_trucks": 4},
  "features": {"semantic_k": 3},
  "model": {"d_t": 4, "tau": 3, "head_dim": 4, "d_p": 2, "ss_hidden": 4},
  "train": {"max_epochs": 2, "steps_per_epoch": 2, "validation_stride": 24},
  "evaluation": {"baselines": ["idw", "knn"]}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << text;
  return dir / "config.json";
}

int run(const std::string& args) {
  const std::string cmd = std::string(AQI_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli(const fs::path& config, const fs::path& out, const std::string& command) {
  return "--config " + config.string() + " --out " + out.string() + " " + command;
}

}  // namespace

TEST_CASE("exit codes for bad input") {
  fs::remove_all(kRoot);
  const fs::path config = write_config(kRoot / "bad", kTinyConfig);
  CHECK(run(cli(config, kRoot / "bad/out", "evaluate")) == 2);
  CHECK(run("--config " + (kRoot / "none.json").string() + " synth") == 2);
  const fs::path invalid = write_config(kRoot / "invalid", R"({"model": {"d_t": -1}})");
  CHECK(run(cli(invalid, kRoot / "invalid/out", "synth")) == 3);
  const fs::path unknown = write_config(kRoot / "unknown", R"({"colour": 1})");
  CHECK(run(cli(unknown, kRoot / "unknown/out", "synth")) == 3);
  CHECK(run("no-such-command") == 3);
  CHECK(run("--version") == 0);
}

TEST_CASE("the pipeline runs end to end and reruns identically") {
  fs::remove_all(kRoot);
  const fs::path config = write_config(kRoot / "run", kTinyConfig);
  for (const char* out : {"a", "b"}) {
    const fs::path dir = kRoot / "run" / out;
    REQUIRE(run(cli(config, dir, "synth")) == 0);
    REQUIRE(run(cli(config, dir, "features")) == 0);
    REQUIRE(run(cli(config, dir, "train")) == 0);
    REQUIRE(run(cli(config, dir, "evaluate")) == 0);
    REQUIRE(run(cli(config, dir, "infer")) == 0);
    REQUIRE(run(cli(config, dir, "importance")) == 0);
  }
  const fs::path a = kRoot / "run/a", b = kRoot / "run/b";
  const std::string metrics = slurp(a / "metrics.csv");
  CHECK(metrics.rfind("name,mae,rmse,r2\nmtstn,", 0) == 0);
  CHECK(metrics.find("\nidw,") != std::string::npos);
  CHECK(metrics.find("\nknn,") != std::string::npos);
  CHECK(metrics == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "model_NO2_fold0.bin") == slurp(b / "model_NO2_fold0.bin"));
  CHECK(slurp(a / "inference_NO2.csv") == slurp(b / "inference_NO2.csv"));
  CHECK(slurp(a / "importance_NO2.csv") == slurp(b / "importance_NO2.csv"));
  const std::string manifest = slurp(a / "manifest_evaluate.json");
  CHECK(manifest.find("\"config_hash\"") != std::string::npos);
  CHECK(manifest.find("\"seeds\"") != std::string::npos);
  // Output paths are excluded from the config hash.
  CHECK(manifest == slurp(b / "manifest_evaluate.json"));
  fs::remove_all(kRoot);
}

TEST_CASE("a seed override changes the data") {
  fs::remove_all(kRoot);
  const fs::path config = write_config(kRoot / "seed", kTinyConfig);
  REQUIRE(run(cli(config, kRoot / "seed/a", "synth")) == 0);
  const std::string first = slurp(kRoot / "seed/data/readings_NO2.csv");
  REQUIRE(run(cli(config, kRoot / "seed/a", "--seed 99 synth")) == 0);
  CHECK(slurp(kRoot / "seed/data/readings_NO2.csv") != first);
  fs::remove_all(kRoot);
}
