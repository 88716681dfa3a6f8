#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "muscale/pipeline.hpp"

using namespace muscale;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "muscale_pipeline_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string strip_wall_clock(std::string text) {
  return std::regex_replace(text, std::regex(R"("wall_seconds":[0-9.eE+-]+)"),
                            "\"wall_seconds\":0");
}

// a fully injected single-design config; no training happens
std::string injected_config(const std::string& out_dir) {
  return R"({
    "designs": [{"name": "gpt", "architecture": "gpt", "objective": "causal-lm",
                 "n_layer": 12, "head_size": 64, "vocab_size": 50304, "block_size": 1024}],
    "widths": {"base": 256, "proxies": [128, 256, 384, 512, 640, 768, 896], "target": 1024},
    "grid": {"base_lr": [5e-4, 1e-3, 5e-3, 1e-2, 3e-2, 5e-2, 7e-2, 1e-1],
             "init": 0.05, "output_mult": 5.0, "init_scale": "stddev"},
    "train": {"total_steps": 20000, "warmup_steps": 5000, "batch_size": 16, "input_length": 2048},
    "fit": {"units": 1e6},
    "inject": {"gpt": {
      "grid": [7.3, 7.03, 5.97, 5.57, 3.74, 5.86, 7.22, 7.25],
      "proxies": {"128": 4.45, "256": 4.20, "384": 4.05, "512": 3.94,
                  "640": 3.90, "768": 3.87, "896": 3.85}
    }},
    "out_dir": ")" + out_dir + R"("
  })";
}

// tiny real-training config used for determinism and report tests
std::string toy_config(const std::string& out_dir, int seed = 5) {
  return R"({
    "designs": [{"name": "toy", "architecture": "gpt", "objective": "causal-lm",
                 "n_layer": 1, "head_size": 8, "vocab_size": 64, "block_size": 32}],
    "widths": {"base": 16, "proxies": [16, 24, 32, 48], "target": 96},
    "grid": {"base_lr": [1e-2, 3e-2], "init": 0.05, "output_mult": 1.0, "init_scale": "stddev"},
    "data": {"synth": {"kind": "markov", "size": 60000, "vocab": 64}, "seed": 7},
    "train": {"total_steps": 120, "warmup_steps": 20, "batch_size": 8, "input_length": 32,
              "final_loss_window": 10},
    "fit": {"units": 1e3},
    "workers": 2,
    "seed": )" + std::to_string(seed) + R"(,
    "out_dir": ")" + out_dir + R"("
  })";
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing and validation") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(injected_config("/tmp/x"));
  CHECK(cfg.designs.size() == 1);
  CHECK(cfg.designs[0].spec.n_layer == 12);
  CHECK(cfg.widths.target == 1024);
  CHECK(cfg.grid.lr.size() == 8);
  CHECK(cfg.grid.base.init_scale == InitScale::stddev);
  CHECK(cfg.grid.base.mult_output == 5.0);
  CHECK(cfg.train.seq_len == 2048);
  CHECK(cfg.fit.options.units == 1e6);
  cfg.validate();

  CHECK_THROWS_AS(ExperimentConfig::from_json("not json"), SpecError);
  ExperimentConfig bad = cfg;
  bad.widths.target = 512;  // below the largest proxy
  CHECK_THROWS_AS(bad.validate(), SpecError);
  ExperimentConfig badbase = cfg;
  badbase.widths.base = 300;  // neither a proxy nor the smallest
  CHECK_THROWS_AS(badbase.validate(), SpecError);
  ExperimentConfig badinj = cfg;
  badinj.inject["nope"] = {};
  CHECK_THROWS_AS(badinj.validate(), SpecError);
}

TEST_CASE("injection dry-run replays the published table through the full loop") {
  const fs::path dir = temp_dir("inject");
  const ExperimentConfig cfg = ExperimentConfig::from_json(injected_config(dir.string()));
  const ParadigmResult result = run_paradigm(cfg);
  REQUIRE(result.designs.size() == 1);
  const DesignResult& dr = result.designs[0];
  REQUIRE_FALSE(dr.failed);

  // the ranking contains exactly that design
  CHECK(result.ranking == std::vector<std::int64_t>{0});
  CHECK(result.winner == 0);

  // the grid picked the published optimum and transferred it
  CHECK(dr.base_hp.lr_matrix == 3e-2);
  CHECK(dr.target_hp.lr_matrix == doctest::Approx(3e-2 / 4.0));
  CHECK(dr.target_hp.lr_other == 3e-2);
  CHECK(dr.target_hp.mult_output == doctest::Approx(5.0 / 4.0));

  // prediction equals a direct fit of the same points
  const PowerLawFit direct = fit_power_law(dr.fit_points, cfg.fit.options);
  CHECK(predict(direct, dr.target_count).loss == doctest::Approx(dr.predicted.loss).epsilon(1e-12));
  // and lands on the published value for this table
  CHECK(dr.predicted.loss > 3.76);
  CHECK(dr.predicted.loss < 3.86);

  emit_report(result, dir);
  CHECK(fs::exists(dir / "runs.jsonl"));
  CHECK(fs::exists(dir / "fits.json"));
  CHECK(fs::exists(dir / "summary.csv"));
  // plot rows: 7 proxies + 1 prediction + header
  std::istringstream plot(slurp(dir / "plot_gpt.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(plot, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 9);
}

TEST_CASE("two injected designs rank by predicted loss with a closed-form gap") {
  // two designs whose injected losses follow (2.0,-0.5,3.0) and (2.0,-0.5,3.1)
  ExperimentConfig cfg = ExperimentConfig::from_json(toy_config(temp_dir("rank").string()));
  cfg.designs.push_back(cfg.designs[0]);
  cfg.designs[0].name = "lawA";
  cfg.designs[1].name = "lawB";
  cfg.fit.options.units = 1e3;

  for (int d = 0; d < 2; ++d) {
    InjectedLosses inj;
    inj.grid = {2.0, 1.0};  // grid values irrelevant to the fit
    for (auto w : cfg.widths.proxies) {
      const double C = static_cast<double>(count_params(cfg.designs[static_cast<std::size_t>(d)].spec.with_width(w), true)) /
                       cfg.fit.options.units;
      inj.proxy_loss[w] = 2.0 * std::pow(C, -0.5) + (d == 0 ? 3.0 : 3.1);
    }
    cfg.inject[cfg.designs[static_cast<std::size_t>(d)].name] = inj;
  }
  const ParadigmResult result = run_paradigm(cfg);
  REQUIRE(result.designs.size() == 2);
  REQUIRE_FALSE(result.designs[0].failed);
  REQUIRE_FALSE(result.designs[1].failed);
  CHECK(result.winner == 0);
  CHECK(result.designs[0].name == "lawA");
  // identical a, b: the predicted gap equals the offset in c
  CHECK(result.designs[1].predicted.loss - result.designs[0].predicted.loss ==
        doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("toy paradigm is deterministic modulo wall-clock") {
  const fs::path d1 = temp_dir("det1");
  const fs::path d2 = temp_dir("det2");
  const ExperimentConfig c1 = ExperimentConfig::from_json(toy_config(d1.string()));
  const ExperimentConfig c2 = ExperimentConfig::from_json(toy_config(d2.string()));
  emit_report(run_paradigm(c1), d1);
  emit_report(run_paradigm(c2), d2);
  CHECK(strip_wall_clock(slurp(d1 / "runs.jsonl")) == strip_wall_clock(slurp(d2 / "runs.jsonl")));
  CHECK(slurp(d1 / "fits.json") == slurp(d2 / "fits.json"));
  CHECK(slurp(d1 / "summary.csv") == slurp(d2 / "summary.csv"));
  CHECK(slurp(d1 / "plot_toy.csv") == slurp(d2 / "plot_toy.csv"));
}

TEST_CASE("a failing design is flagged and excluded without aborting siblings") {
  ExperimentConfig cfg = ExperimentConfig::from_json(toy_config(temp_dir("fail").string()));
  cfg.designs.push_back(cfg.designs[0]);
  cfg.designs[1].name = "broken";
  InjectedLosses inj;
  inj.grid = {2.0, 1.9};
  for (auto w : cfg.widths.proxies)
    inj.proxy_loss[w] = std::numeric_limits<double>::infinity();  // every proxy diverged
  cfg.inject["broken"] = inj;

  const ParadigmResult result = run_paradigm(cfg);
  REQUIRE(result.designs.size() == 2);
  CHECK_FALSE(result.designs[0].failed);
  CHECK(result.designs[1].failed);
  CHECK(result.designs[1].failure.find("diverged") != std::string::npos);
  CHECK(result.ranking == std::vector<std::int64_t>{0});

  const fs::path dir = temp_dir("fail_report");
  emit_report(result, dir);
  const std::string summary = slurp(dir / "summary.csv");
  CHECK(summary.find("broken") != std::string::npos);
  CHECK(summary.find("true") != std::string::npos);
}

TEST_CASE("an empty result still emits a valid report with zero rows") {
  const fs::path dir = temp_dir("empty");
  emit_report(ParadigmResult{}, dir);
  const std::string summary = slurp(dir / "summary.csv");
  CHECK(summary == "design,predicted_loss,sigma,cost_ratio,rank,failed\n");
  CHECK(slurp(dir / "runs.jsonl").empty());
}

TEST_CASE("unwritable directory errors before any partial write") {
  CHECK_THROWS_AS(emit_report(ParadigmResult{}, "/proc/definitely/not/writable"), FormatError);
}

TEST_CASE("exactly one grid search per design regardless of proxy count") {
  // four proxy widths, two grid points: the manifest must contain exactly
  // grid.size() grid runs and proxies-1 proxy runs (base reuses its grid run)
  const fs::path dir = temp_dir("onegrid");
  const ExperimentConfig cfg = ExperimentConfig::from_json(toy_config(dir.string()));
  const ParadigmResult result = run_paradigm(cfg);
  REQUIRE_FALSE(result.designs[0].failed);
  emit_report(result, dir);
  std::istringstream runs(slurp(dir / "runs.jsonl"));
  std::string line;
  int grid_runs = 0, proxy_runs = 0;
  while (std::getline(runs, line)) {
    if (line.find("grid[") != std::string::npos) ++grid_runs;
    if (line.find("proxy w=") != std::string::npos) ++proxy_runs;
  }
  CHECK(grid_runs == 2);
  CHECK(proxy_runs == 3);

  // manifest completeness: cost itemization mirrors the run counts
  const auto& cost = result.designs[0].cost;
  CHECK(static_cast<int>(cost.grid_items.size()) == grid_runs);
  CHECK(static_cast<int>(cost.proxy_items.size()) == proxy_runs);
}

TEST_CASE("ranking is argmin-stable under a constant shift") {
  ExperimentConfig cfg = ExperimentConfig::from_json(toy_config(temp_dir("shift").string()));
  cfg.designs.push_back(cfg.designs[0]);
  cfg.designs[0].name = "a";
  cfg.designs[1].name = "b";
  auto inject_for = [&](const std::string& name, double shift) {
    InjectedLosses inj;
    inj.grid = {2.0, 1.9};
    for (auto w : cfg.widths.proxies) {
      const double C = static_cast<double>(count_params(cfg.designs[0].spec.with_width(w), true)) / 1e3;
      inj.proxy_loss[w] = 1.5 * std::pow(C, -0.4) + 2.0 + shift + (name == "b" ? 0.05 : 0.0);
    }
    cfg.inject[name] = inj;
  };
  inject_for("a", 0.0);
  inject_for("b", 0.0);
  const ParadigmResult base = run_paradigm(cfg);
  inject_for("a", 10.0);
  inject_for("b", 10.0);
  const ParadigmResult shifted = run_paradigm(cfg);
  CHECK(base.winner == shifted.winner);
  CHECK(base.ranking == shifted.ranking);
}

TEST_CASE("coord check: zero output head means zero logits RMS at step 0") {
  const Corpus corpus = synth_corpus(SynthKind::markov, 20000, 64, 3);
  ModelSpec spec;
  spec.architecture = Architecture::gpt_block;
  spec.n_layer = 1;
  spec.width = 16;
  spec.head_size = 8;
  spec.vocab_size = 64;
  spec.block_size = 32;
  MuHyperparams hp;
  hp.lr_matrix = 1e-2;
  hp.lr_other = 1e-2;
  hp.init_matrix = 0.05;
  hp.init_other = 0.05;
  hp.init_scale = InitScale::stddev;
  const CoordCheckTable table =
      coord_check(spec, {16, 64}, hp, 16, 4, true, corpus, 4, 16, 11);
  REQUIRE(table.logits_rms.size() == 4);
  CHECK(table.logits_rms[0][0] == 0.0);
  CHECK(table.logits_rms[0][1] == 0.0);
  CHECK(table.hidden_rms[0][0] > 0.0);
  const std::string csv = table.csv();
  CHECK(csv.find("step,width,hidden_rms,logits_rms") == 0);
}

TEST_CASE("train_target trains the target width with transferred hyperparameters") {
  ExperimentConfig cfg = ExperimentConfig::from_json(toy_config(temp_dir("target").string()));
  MuHyperparams hp;
  hp.lr_matrix = 1e-2;
  hp.lr_other = 1e-2;
  hp.init_matrix = 0.05;
  hp.init_other = 0.05;
  hp.init_scale = InitScale::stddev;
  cfg.explicit_hp = hp;
  const RunRecord rec = train_target(cfg, "toy");
  CHECK(rec.width == 96);
  CHECK_FALSE(rec.diverged);
  // lr was transferred by r = 96/16 = 6 for matrix tensors only
  CHECK(rec.hp.lr_matrix == doctest::Approx(1e-2 / 6.0));
  CHECK(rec.hp.lr_other == 1e-2);
  CHECK_THROWS_AS((void)train_target(cfg, "nope"), SpecError);
}

}  // TEST_SUITE
