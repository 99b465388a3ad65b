#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "oracles.hpp"
#include "pct/errors.hpp"
#include "pct/pipeline.hpp"
#include "pct/weights_io.hpp"
#include "temp_dir.hpp"

using namespace pct;

namespace {

// Small enough to run every stage in a few seconds.
RunConfig tiny_config(const std::filesystem::path& out, std::uint64_t seed) {
  RunConfig c = default_run_config();
  c.seed = seed;
  c.output = out;
  c.synth.subjects = 10;
  c.synth.slices_per_subject = 1;
  c.synth.size = 32;
  c.denoiser = DenoiserConfig{2, 4, 3};
  c.noise_net = NoiseNetConfig{1, 4};
  for (TrainConfig* t : {&c.pretrain, &c.noise_training}) {
    t->steps = 4;
    t->batch = 2;
    t->patch = 32;
    t->epoch_steps = 2;
  }
  c.finetune.loop.steps = 3;
  c.finetune.loop.batch = 2;
  c.finetune.loop.patch = 32;
  c.schemes = {SchemeKind::N2C};
  c.save_images = false;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PCT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::vector<char>> dir_bytes(const std::filesystem::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) out[e.path().filename().string()] = read_bytes(e.path());
  return out;
}

}  // namespace

TEST_CASE("run config: JSON round trip and unknown keys") {
  TempDir dir;
  RunConfig c = tiny_config(dir / "out", 5);
  c.strategies = {NoiseStrategy::Gaussian, NoiseStrategy::Ensemble};
  c.finetune.update_period = 7;
  c.finetune.granularity = FinetuneGranularity::PerSubject;
  save_run_config(c, dir / "c.json");
  const RunConfig back = load_run_config(dir / "c.json");
  CHECK(to_json(back) == to_json(c));
  save_run_config(back, dir / "d.json");
  CHECK(read_bytes(dir / "c.json") == read_bytes(dir / "d.json"));

  auto j = to_json(c);
  j["finetune"]["stepz"] = 3;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  auto k = to_json(c);
  k["finetune"]["update_period"] = 0;
  CHECK_THROWS_AS(run_config_from_json(k), ConfigError);
}

TEST_CASE("pipeline: report rows; zero fine-tuning steps reproduce the scheme row") {
  TempDir dir;
  RunConfig c = tiny_config(dir / "run", 3);
  c.finetune.loop.steps = 0;
  const PipelineResult r = run_pipeline(c);
  for (const char* row : {"LDCT input", "N2C", "N2C+Ours", "N2C+Ours w/o sync", "N2C+Hist", "N2C+Gaussian",
                          "N2C+Model+Hist"}) {
    CHECK_NOTHROW(r.report.row(row));
  }
  CHECK(r.report.rows.size() == 7);
  CHECK(r.outputs.at("N2C+Ours") == r.outputs.at("N2C"));
  CHECK(r.report.row("N2C+Ours").psnr_mean == r.report.row("N2C").psnr_mean);
  CHECK(std::filesystem::exists(dir / "run" / "report.csv"));
  CHECK(std::filesystem::exists(dir / "run" / "run_config.json"));
}

TEST_CASE("pipeline: rerun from the persisted config is bit-identical") {
  TempDir dir;
  const PipelineResult a = run_pipeline(tiny_config(dir / "a", 8));
  RunConfig again = load_run_config(dir / "a" / "run_config.json");
  again.output = dir / "b";
  const PipelineResult b = run_pipeline(again);
  CHECK(a.outputs == b.outputs);
  CHECK(read_bytes(dir / "a" / "report.csv") == read_bytes(dir / "b" / "report.csv"));
  CHECK(read_bytes(dir / "a" / "N2C" / "pretrained.pctw") == read_bytes(dir / "b" / "N2C" / "pretrained.pctw"));
}

TEST_CASE("cli: synth output is byte-identical across reruns") {
  TempDir dir;
  const std::string common = " --subjects 10 --slices 2 --size 32 --seed 4";
  REQUIRE(run_cli("synth --out " + (dir / "a").string() + common) == 0);
  REQUIRE(run_cli("synth --out " + (dir / "b").string() + common) == 0);
  const auto a = dir_bytes(dir / "a");
  const auto b = dir_bytes(dir / "b");
  CHECK(a.size() == 10 * 2 * 2 + 2);  // raw slices, manifest, synth config
  // synth_config.json records the output path, which legitimately differs
  for (const auto& [name, bytes] : a) {
    if (name == "synth_config.json") continue;
    CHECK(b.at(name) == bytes);
  }
  // refuses to overwrite without --force
  CHECK(run_cli("synth --out " + (dir / "a").string() + common) == 3);
  CHECK(run_cli("synth --force --out " + (dir / "a").string() + common) == 0);
}

TEST_CASE("cli: exit codes") {
  TempDir dir;
  CHECK(run_cli("") == 2);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("synth --no-such-flag") == 2);
  CHECK(run_cli("synth --dose 0 --out " + (dir / "x").string()) == 2);
  CHECK(run_cli("eval --model a=b.pctw --dataset " + (dir / "missing").string()) == 3);
  CHECK(run_cli("pretrain --update-period 0 --dataset " + (dir / "missing").string()) == 2);

  // non-finite weights make fine-tuning fail numerically
  REQUIRE(run_cli("synth --subjects 10 --slices 1 --size 64 --seed 1 --out " + (dir / "d").string()) == 0);
  DenoiserNet bad = build_denoiser(DenoiserConfig{2, 4, 3}, 1);
  bad.parameters().back()->value[0] = std::numeric_limits<float>::quiet_NaN();
  save_weights(bad, dir / "bad.pctw");
  CHECK(run_cli("finetune --steps 2 --noise-strategy gaussian --dataset " + (dir / "d").string() + " --weights " +
                (dir / "bad.pctw").string() + " --out " + (dir / "ft").string()) == 4);
  // and a good model with the same command succeeds
  save_weights(build_denoiser(DenoiserConfig{2, 4, 3}, 1), dir / "good.pctw");
  CHECK(run_cli("finetune --steps 2 --noise-strategy gaussian --dataset " + (dir / "d").string() + " --weights " +
                (dir / "good.pctw").string() + " --out " + (dir / "ft2").string()) == 0);
}
