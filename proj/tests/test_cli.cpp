#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dtp_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// exit status of the installed binary run from `cwd` with output discarded
int cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd =
      "cd " + cwd.string() + " && " + DTP_CLI_PATH + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return status < 0 ? status : WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_run_config(const fs::path& p, const std::string& out_dir) {
  std::ofstream f(p);
  f << "batch_size = 2\nlr = 1e-3\nwarmup_steps = 1\ntotal_steps = 2\nseed = 11\n"
    << "out_dir = \"" << out_dir << "\"\ndatasets = [\"g:data:1.0\"]\n"
    << "checkpoint_every = 0\nmonitor_every = 2\nmonitor_windows = 2\nmonitor_sample_steps = 2\n"
    << "[model]\nlayers = 2\nd_model = 32\nheads = 4\nt_a = 4\nlang_embed = 16\nt_img = 1\n"
    << "bands = 2\nk_max = 20\n";
}

}  // namespace

TEST_CASE("dataset generation is byte-identical across runs of the binary") {
  TempDir dir("gendata");
  REQUIRE(cli(dir.path, "gen-data --task grasp --n 3 --seed 7 --out a") == 0);
  REQUIRE(cli(dir.path, "gen-data --task grasp --n 3 --seed 7 --out b") == 0);
  const auto fa = sorted_files(dir.path / "a");
  const auto fb = sorted_files(dir.path / "b");
  REQUIRE(fa.size() == fb.size());
  REQUIRE(fa.size() >= 4);  // manifest + episodes
  for (size_t i = 0; i < fa.size(); ++i) {
    CHECK(fa[i].filename() == fb[i].filename());
    CHECK(slurp(fa[i]) == slurp(fb[i]));
  }
}

TEST_CASE("bad invocations exit nonzero") {
  TempDir dir("badargs");
  CHECK(cli(dir.path, "definitely-not-a-subcommand") != 0);
  CHECK(cli(dir.path, "pretrain --config does_not_exist.toml") != 0);
  CHECK(cli(dir.path, "gen-data --task juggle") != 0);
  CHECK(cli(dir.path, "eval --metric nonsense --checkpoint x.bin") != 0);
  std::ofstream(dir.path / "bad.toml") << "lr = -1\ndatasets = [\"g:d\"]\n";
  CHECK(cli(dir.path, "pretrain --config bad.toml") != 0);
  std::ofstream(dir.path / "typo.toml") << "learning_rate = 1e-3\n";
  CHECK(cli(dir.path, "pretrain --config typo.toml") != 0);
}

TEST_CASE("the full train-sample-eval-inspect loop runs from the command line") {
  TempDir dir("loop");
  REQUIRE(cli(dir.path, "gen-data --task grasp --n 3 --seed 3 --out data") == 0);
  write_run_config(dir.path / "run.toml", "run");
  REQUIRE(cli(dir.path, "pretrain --config run.toml --plots") == 0);
  CHECK(fs::exists(dir.path / "run/metrics.csv"));
  CHECK(fs::exists(dir.path / "run/ckpt_final.bin"));
  CHECK(fs::exists(dir.path / "run/loss.svg"));
  CHECK(fs::exists(dir.path / "run/monitor.svg"));

  // overrides must actually land: a different out_dir via --set
  REQUIRE(cli(dir.path, "pretrain --config run.toml --set out_dir=\\\"run_b\\\" --set seed=12") ==
          0);
  CHECK(fs::exists(dir.path / "run_b/metrics.csv"));

  CHECK(cli(dir.path, "sample --checkpoint run/ckpt_final.bin --steps 5 --n 2 --seed 1 "
                      "--out chunks.csv --svg scatter.svg") == 0);
  CHECK(cli(dir.path, "sample --checkpoint run/ckpt_final.bin --steps 40 --n 1 --seed 1") == 0);
  CHECK(fs::exists(dir.path / "chunks.csv"));
  CHECK(fs::exists(dir.path / "scatter.svg"));
  {
    std::ifstream f(dir.path / "chunks.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "sample,row,slot,value");
  }

  CHECK(cli(dir.path, "eval --metric multimodality --checkpoint run/ckpt_final.bin --trials 2 "
                      "--rollouts 1 --horizon 4 --steps 2 --out report.json") == 0);
  const std::string report = slurp(dir.path / "report.json");
  CHECK(report.find("\"trials\":2") != std::string::npos);

  const auto episodes = sorted_files(dir.path / "data");
  auto bin = std::find_if(episodes.begin(), episodes.end(),
                          [](const fs::path& p) { return p.extension() == ".bin"; });
  REQUIRE(bin != episodes.end());
  CHECK(cli(dir.path, "inspect-episode --path " + bin->string()) == 0);
}
