#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muscale/cost.hpp"
#include "muscale/data.hpp"
#include "muscale/model.hpp"
#include "muscale/powerlaw.hpp"
#include "muscale/search.hpp"
#include "muscale/train.hpp"

namespace muscale {

/// Raised when an experiment ends with nothing but divergent runs
/// (CLI exit code 4).
class NoBasinError : public SpecError {
 public:
  explicit NoBasinError(const std::string& what) : SpecError(what) {}
};

struct DesignConfig {
  std::string name;
  ModelSpec spec;  // width field is overwritten per proxy/target width
};

struct WidthPlan {
  std::int64_t base = 0;
  std::vector<std::int64_t> proxies;  // must contain or exceed base; sorted ascending
  std::int64_t target = 0;
};

/// Externally supplied losses, replayed through the pipeline instead of
/// training (dry-run mode).
struct InjectedLosses {
  std::vector<double> grid;                    // one loss per grid point
  std::map<std::int64_t, double> proxy_loss;   // width -> final loss
};

struct DataConfig {
  std::string corpus_path;  // empty => synthetic
  SynthKind synth_kind = SynthKind::text;
  std::int64_t synth_size = 1'000'000;
  std::int64_t synth_vocab = 256;
  std::uint64_t seed = 7;
};

struct FitConfigBlock {
  FitOptions options;
  bool include_embeddings = true;   // the default counting rule
  bool ablate_embeddings = false;   // additionally fit with embeddings excluded
};

struct ExperimentConfig {
  std::vector<DesignConfig> designs;
  WidthPlan widths;
  HpGrid grid;
  std::optional<MuHyperparams> explicit_hp;  // skips the grid for train-target
  DataConfig data;
  TrainConfig train;
  FitConfigBlock fit;
  double basin_tolerance = 0.05;
  std::int64_t workers = 0;  // 0 = hardware concurrency
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::map<std::string, InjectedLosses> inject;  // keyed by design name

  void validate() const;
  static ExperimentConfig from_json(const std::string& text);
  static ExperimentConfig from_json_file(const std::filesystem::path& path);
  Corpus load_data() const;
  std::int64_t effective_workers() const;
};

struct DesignResult {
  std::string name;
  ModelSpec spec;  // template (width = base)
  GridResult grid;
  MuHyperparams base_hp;  // h0*, tuned at the base width
  std::vector<RunRecord> proxy_runs;
  std::vector<FitPoint> fit_points;  // per proxy width, in fit units
  PowerLawFit fit;
  std::optional<PowerLawFit> fit_without_embeddings;
  double target_count = 0.0;  // C_T in fit units
  Prediction predicted;       // L_T with 1-sigma band
  MuHyperparams target_hp;    // h_T*
  CostReport cost;
  bool failed = false;
  std::string failure;
};

struct ParadigmResult {
  std::vector<DesignResult> designs;
  std::vector<std::int64_t> ranking;  // indices into designs, best predicted loss first
  std::int64_t winner = -1;           // ranking.front(), -1 when nothing ranked
};

/// Runs the research-without-re-search loop: per design, one grid search at
/// the base width, μTransfer to each proxy width, proxy training, power-law
/// fit, and loss prediction at the target width. The target model is never
/// trained here. A failed design is flagged and excluded from ranking without
/// aborting its siblings.
ParadigmResult run_paradigm(const ExperimentConfig& config);

/// Explicitly trains the target-width model for one design (the optional last
/// line of the paradigm). Uses config.explicit_hp when set, otherwise runs the
/// design's grid search first.
RunRecord train_target(const ExperimentConfig& config, const std::string& design_name);

struct CoordCheckTable {
  std::vector<std::int64_t> widths;
  // [step][width index]
  std::vector<std::vector<double>> hidden_rms;  // final block output RMS
  std::vector<std::vector<double>> logits_rms;
  std::vector<double> hidden_ratio;  // per step: max/min hidden RMS across widths
  std::vector<bool> diverged;        // per width

  std::string csv() const;
};

/// Activation-scale diagnostic: trains a few steps per width at constant
/// per-class learning rates and records activation RMS before each update.
/// transfer_hp=true applies the μP rule per width; false reuses hp0 unscaled
/// (standard parametrization), which is the comparison case.
CoordCheckTable coord_check(const ModelSpec& spec_template, const std::vector<std::int64_t>& widths,
                            const MuHyperparams& hp0, std::int64_t base_width, std::int64_t steps,
                            bool transfer_hp, const Corpus& corpus, std::int64_t batch_size,
                            std::int64_t seq_len, std::uint64_t seed);

/// Writes runs.jsonl, fits.json, summary.csv, plot_<design>.csv, and
/// traces/<label>.csv under dir. Validates writability before the first write.
void emit_report(const ParadigmResult& result, const std::filesystem::path& dir);

}  // namespace muscale
