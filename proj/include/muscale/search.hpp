#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "muscale/model.hpp"
#include "muscale/mup.hpp"
#include "muscale/train.hpp"

namespace muscale {

/// Cartesian grid of candidate base-width hyperparameters. Axes other than the
/// learning rate default to singletons taken from `base`.
struct HpGrid {
  MuHyperparams base;              // carries the non-searched fields
  std::vector<double> lr;          // applied to both lr classes
  std::vector<double> init;        // init scale axis (interpreted per base.init_scale)
  std::vector<double> mult_output; // output multiplier axis

  HpGrid() = default;

  std::int64_t size() const;
  /// Point i of the row-major cartesian product (lr-major).
  MuHyperparams point(std::int64_t i) const;
  void validate() const;
};

struct GridPoint {
  MuHyperparams hp;
  double final_loss = 0.0;
  bool diverged = false;
  RunRecord record;  // populated by trained searches; empty in injection mode
};

struct GridResult {
  std::vector<GridPoint> points;
  std::int64_t best_index = -1;

  const GridPoint& best() const { return points[static_cast<std::size_t>(best_index)]; }
};

/// Callback that trains one grid point and returns its record. The pipeline
/// supplies real training or injected losses through this hook.
using GridRunner = std::function<RunRecord(const MuHyperparams& hp, std::int64_t index)>;

/// Argmin over finite losses (NaN counts as +inf). Ties break toward smaller
/// learning rate, then smaller init, then smaller multiplier. Every grid point
/// issues exactly one run; points are independent and run on `workers`
/// threads (the runner must not share mutable state between calls). Throws
/// SpecError("no basin found") when every point diverges.
GridResult grid_search(const HpGrid& grid, const GridRunner& runner, std::int64_t workers = 1);

/// Convenience: grid search by actually training base-width models. Every
/// point sees the identical batch sequence (stream_seed); init/mask seeds
/// derive from run_seed and the point index.
GridResult grid_search_train(const ModelSpec& base_spec, const HpGrid& grid,
                             const Corpus& corpus, const TrainConfig& config,
                             std::uint64_t run_seed, std::uint64_t stream_seed,
                             std::int64_t workers = 1);

/// Builds a GridResult from externally supplied losses (replay/injection mode).
GridResult grid_result_from_losses(const HpGrid& grid, const std::vector<double>& losses);

/// Points with loss <= best + tolerance (absolute nats). Monotone in tolerance.
std::vector<std::int64_t> basin_members(const GridResult& result, double tolerance);

/// Arithmetic mean of finite final losses per width, for basin-averaged fits.
/// Non-finite runs are excluded and reported; a width with no finite run is an
/// error naming the width.
struct BasinAverage {
  std::map<std::int64_t, double> mean_loss_by_width;
  std::vector<std::string> excluded;  // descriptions of dropped divergent runs
};

BasinAverage basin_average_losses(const std::vector<RunRecord>& runs);

}  // namespace muscale
