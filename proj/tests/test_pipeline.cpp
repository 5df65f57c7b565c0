#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "fuselet/pipeline.hpp"

using namespace fuselet;
namespace fs = std::filesystem;

static fs::path tmp_root() {
  fs::path d = fs::temp_directory_path() / "fuselet_test_pipeline";
  fs::create_directories(d);
  return d;
}

static fs::path fresh_dir(const std::string& name) {
  fs::path d = tmp_root() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// small two-scene setup that finishes in well under a second per stage
static PipelineConfig tiny_config(const fs::path& out_dir) {
  PipelineConfig cfg;
  cfg.output_dir = out_dir;
  cfg.base_dir = out_dir;

  SynthSceneConfig train;
  train.name = "train_a";
  train.role = "train";
  train.spec.n_rows = 64;
  train.spec.n_cols = 64;
  train.spec.n_fires = 2;
  train.spec.n_plumes = 1;
  train.spec.seed = 11;
  train.spec.fire_intensity = 4.5;
  train.spec.smoke_opacity = 1.0;
  cfg.synth_scenes.push_back(train);

  SynthSceneConfig test = train;
  test.name = "test_a";
  test.role = "test";
  test.spec.n_fires = 1;
  test.spec.seed = 21;
  cfg.synth_scenes.push_back(test);

  cfg.sampling.k = 8;
  cfg.sampling.n_total = 3000;
  cfg.sampling.seed = 7;

  cfg.dbn.layer_dims = {24, 24};
  cfg.dbn.cd.epochs = 2;
  cfg.dbn.cd.seed = 8;

  cfg.iic.c_root = 12;
  cfg.iic.c_child = 4;
  cfg.iic.min_child_samples = 40;
  cfg.iic.epochs = 4;
  cfg.iic.seed = 9;

  cfg.context.classes = {"fire", "smoke"};
  cfg.morph.min_area = 4;
  return cfg;
}

static std::string slurp(const fs::path& p) { return read_text_file(p); }

TEST_CASE("pipeline: stages run, cache, and invalidate") {
  fs::path out = fresh_dir("stagewise");
  PipelineConfig cfg = tiny_config(out);

  SECTION("run-all produces the full artifact tree") {
    PipelineRunner runner(cfg);
    std::vector<StageResult> results = runner.run_all();
    REQUIRE(results.size() == 8);
    for (const StageResult& r : results) {
      CAPTURE(r.stage);
      CHECK(!r.skipped);
      for (const std::string& o : r.outputs) CHECK(fs::exists(o));
    }

    CHECK(fs::exists(out / "scenes/train_a.img"));
    CHECK(fs::exists(out / "scenes/test_a_truth_smoke.img"));
    CHECK(fs::exists(out / "samples.bin"));
    CHECK(fs::exists(out / "channel_stats.json"));
    CHECK(fs::exists(out / "encoder.bin"));
    CHECK(fs::exists(out / "tree.bin"));
    CHECK(fs::exists(out / "segmaps/train_a.img"));
    CHECK(fs::exists(out / "segmaps/test_a.img"));
    CHECK(fs::exists(out / "context.json"));
    CHECK(fs::exists(out / "masks/test_a_fire.img"));
    CHECK(fs::exists(out / "masks/test_a_smoke.img"));
    CHECK(fs::exists(out / "masks/test_a_fire_diff.img"));
    CHECK(fs::exists(out / "manifest.json"));

    std::string csv = slurp(out / "report.csv");
    CHECK(csv.rfind("dataset,total_pixel_count,ssim\n", 0) == 0);
    CHECK(csv.find("fire,") != std::string::npos);
    CHECK(csv.find("smoke,") != std::string::npos);

    // second pass over a fresh runner: everything cached
    PipelineRunner again(cfg);
    for (const StageResult& r : again.run_all()) {
      CAPTURE(r.stage);
      CHECK(r.skipped);
    }

    // force re-runs even when current
    RunOptions forced;
    forced.force = true;
    PipelineRunner forced_runner(cfg, forced);
    StageResult r = forced_runner.run("train-encoder");
    CHECK(!r.skipped);
  }

  SECTION("editing one section re-runs the stages it feeds") {
    PipelineRunner(cfg).run_all();

    // change clustering config: encoder stays cached, tree re-trains
    PipelineConfig edited = cfg;
    edited.iic.epochs += 1;
    PipelineRunner runner(edited);
    CHECK(runner.run("gen-synthetic").skipped);
    CHECK(runner.run("preprocess").skipped);
    CHECK(runner.run("train-encoder").skipped);
    CHECK(!runner.run("train-cluster").skipped);
    CHECK(!runner.run("predict").skipped);  // tree.bin content changed
  }

  SECTION("a corrupted intermediate re-runs its producer") {
    PipelineRunner(cfg).run_all();
    std::string original = slurp(out / "samples.bin");
    // truncate the sample archive; its recorded output hash no longer matches
    { std::ofstream f(out / "samples.bin", std::ios::trunc); }
    PipelineRunner runner(cfg);
    CHECK(!runner.run("preprocess").skipped);  // self-heals
    CHECK(slurp(out / "samples.bin") == original);  // and deterministically so
    // the regenerated archive is byte-identical, so consumers stay cached
    CHECK(runner.run("train-encoder").skipped);
  }
}

TEST_CASE("pipeline: missing prerequisites fail with a data error") {
  fs::path out = fresh_dir("missing_inputs");
  PipelineConfig cfg = tiny_config(out);
  PipelineRunner runner(cfg);
  // no stages have run: train-encoder has no samples.bin to read
  CHECK_THROWS_AS(runner.run("train-encoder"), DataError);
  CHECK_THROWS_AS(runner.run("evaluate"), DataError);
  // an output dir is mandatory
  PipelineConfig no_out = cfg;
  no_out.output_dir.clear();
  CHECK_THROWS_AS(PipelineRunner(no_out), ConfigError);
}

TEST_CASE("pipeline: real-scene roster drives context from polygon labels") {
  // run the synthetic pipeline once, then re-point a "real" config at the
  // generated rasters and labels as if they were field data
  fs::path synth_out = fresh_dir("realdata_src");
  PipelineConfig synth_cfg = tiny_config(synth_out);
  PipelineRunner(synth_cfg).run_all();

  fs::path out = fresh_dir("realdata_run");
  PipelineConfig cfg = tiny_config(out);
  cfg.synth_scenes.clear();

  RealSceneConfig train;
  train.name = "train_a";
  train.role = "train";
  train.raster = synth_out / "scenes/train_a.hdr";
  train.labels = synth_out / "scenes/train_a_labels.geojson";
  cfg.scenes.push_back(train);

  RealSceneConfig test;
  test.name = "test_a";
  test.role = "test";
  test.raster = synth_out / "scenes/test_a.hdr";
  test.truth["fire"] = synth_out / "scenes/test_a_truth_fire.hdr";
  test.truth["smoke"] = synth_out / "scenes/test_a_truth_smoke.hdr";
  cfg.scenes.push_back(test);

  PipelineRunner runner(cfg);
  for (const StageResult& r : runner.run_all()) {
    CAPTURE(r.stage);
    if (r.stage == "gen-synthetic")
      CHECK(r.outputs.empty());  // nothing to generate
    else
      CHECK(!r.skipped);
  }
  CHECK(fs::exists(out / "masks/test_a_fire.img"));
  std::string csv = slurp(out / "report.csv");
  CHECK(csv.find("fire,") != std::string::npos);

  // context assignment requires labels on training scenes
  PipelineConfig unlabeled = cfg;
  unlabeled.output_dir = fresh_dir("realdata_nolabels");
  unlabeled.scenes[0].labels.clear();
  PipelineRunner bad(unlabeled);
  for (const std::string& stage :
       {"gen-synthetic", "preprocess", "train-encoder", "train-cluster",
        "predict"})
    bad.run(stage);
  CHECK_THROWS_AS(bad.run("assign-context"), ConfigError);
}

TEST_CASE("pipeline: outputs are byte-identical across thread counts") {
  fs::path out_a = fresh_dir("det_a");
  fs::path out_b = fresh_dir("det_b");

  RunOptions serial;
  serial.threads = 1;
  PipelineRunner(tiny_config(out_a), serial).run_all();

  RunOptions parallel;
  parallel.threads = 3;
  PipelineRunner(tiny_config(out_b), parallel).run_all();

  for (const std::string& rel :
       {"samples.bin", "encoder.bin", "tree.bin", "segmaps/train_a.img",
        "segmaps/test_a.img", "context.json", "masks/test_a_fire.img",
        "masks/test_a_smoke.img", "report.csv"}) {
    CAPTURE(rel);
    CHECK(slurp(out_a / rel) == slurp(out_b / rel));
  }
}

// ---------------------------------------------------------------------------
// CLI driver, exercised as a subprocess. FUSELET_CLI is injected by CMake.

static int run_cli(const std::string& args, const std::string& env = "") {
  std::string cmd = env + (env.empty() ? "" : " ") + FUSELET_CLI + " " + args +
                    " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

static fs::path write_cli_config(const fs::path& dir,
                                 const std::string& extra_dbn = "") {
  fs::path out = dir / "out";
  std::string text =
      "[output]\ndir = \"" + out.string() + "\"\n"
      "[[synth_scenes]]\nname = \"train_a\"\nrole = \"train\"\n"
      "n_rows = 64\nn_cols = 64\nn_fires = 2\nn_plumes = 1\nseed = 11\n"
      "fire_intensity = 4.5\nsmoke_opacity = 1.0\n"
      "[[synth_scenes]]\nname = \"test_a\"\nrole = \"test\"\n"
      "n_rows = 64\nn_cols = 64\nn_fires = 1\nn_plumes = 1\nseed = 21\n"
      "fire_intensity = 4.5\nsmoke_opacity = 1.0\n"
      "[sampling]\nk = 8\nn_total = 3000\nseed = 7\n"
      "[dbn]\nlayer_dims = [24, 24]\nepochs = 2\nseed = 8\n" + extra_dbn +
      "[iic]\nc_root = 12\nc_child = 4\nmin_child_samples = 40\n"
      "epochs = 4\nseed = 9\n"
      "[context]\nclasses = [\"fire\", \"smoke\"]\n"
      "[morph]\nmin_area = 4\n";
  fs::path cfg_path = dir / "pipeline.toml";
  atomic_write_file(cfg_path, text);
  return cfg_path;
}

TEST_CASE("cli: exit codes distinguish config, data, and numeric failures") {
  fs::path dir = fresh_dir("cli_codes");
  fs::path cfg = write_cli_config(dir);

  CHECK(run_cli("") == 2);                          // missing subcommand
  CHECK(run_cli("gen-synthetic") == 2);             // missing --config
  CHECK(run_cli("gen-synthetic --config /no/such/file.toml") == 2);
  CHECK(run_cli("gen-synthetic --config " + cfg.string() + " --threads 0") == 2);

  // config error from inside the file: tau outside [0, 1)
  fs::path bad_dir = fresh_dir("cli_badcfg");
  fs::path bad = write_cli_config(bad_dir);
  std::string text = read_text_file(bad);
  text += "\n";
  atomic_write_file(bad, text.replace(text.find("[context]\nclasses"),
                                      std::string("[context]\nclasses").size(),
                                      "[context]\ntau = 1.5\nclasses"));
  CHECK(run_cli("gen-synthetic --config " + bad.string()) == 2);

  // data error: training a model before samples exist
  CHECK(run_cli("train-encoder --config " + cfg.string()) == 3);

  // numeric error: a learning rate that blows the encoder up to non-finite
  fs::path hot_dir = fresh_dir("cli_hot");
  fs::path hot = write_cli_config(hot_dir, "learning_rate = 1e12\n");
  CHECK(run_cli("gen-synthetic --config " + hot.string()) == 0);
  CHECK(run_cli("preprocess --config " + hot.string()) == 0);
  CHECK(run_cli("train-encoder --config " + hot.string()) == 4);
}

TEST_CASE("cli: staged runs, caching, seed override, output redirection") {
  fs::path dir = fresh_dir("cli_run");
  fs::path cfg = write_cli_config(dir);

  CHECK(run_cli("run-all --config " + cfg.string()) == 0);
  CHECK(fs::exists(dir / "out/report.csv"));

  // the second invocation is a cache hit; "up-to-date" appears on stdout
  fs::path log = dir / "rerun.log";
  std::string cmd = std::string(FUSELET_CLI) + " run-all --config " +
                    cfg.string() + " > " + log.string() + " 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  std::string printed = read_text_file(log);
  CHECK(printed.find("[gen-synthetic] up-to-date") != std::string::npos);
  CHECK(printed.find("[evaluate] up-to-date") != std::string::npos);
  CHECK(printed.find("dataset") != std::string::npos);  // report echoed

  // --seed reruns sampling with new streams: the sample archive changes
  std::string before = slurp(dir / "out/samples.bin");
  CHECK(run_cli("preprocess --config " + cfg.string() + " --seed 99") == 0);
  std::string after = slurp(dir / "out/samples.bin");
  CHECK(before != after);

  // FUSELET_OUT redirects without touching the config file
  fs::path env_out = dir / "env_out";
  CHECK(run_cli("gen-synthetic --config " + cfg.string(),
                "FUSELET_OUT=" + env_out.string()) == 0);
  CHECK(fs::exists(env_out / "scenes/train_a.img"));
  CHECK(fs::exists(env_out / "manifest.json"));
}
