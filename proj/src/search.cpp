#include "muscale/search.hpp"

#include <cmath>
#include <limits>

#include "muscale/parallel.hpp"

namespace muscale {

void HpGrid::validate() const {
  if (lr.empty()) throw SpecError("grid: lr axis must be non-empty");
  for (double v : lr)
    if (!(v > 0)) throw SpecError("grid: lr values must be positive");
  for (double v : init)
    if (!(v > 0)) throw SpecError("grid: init values must be positive");
  for (double v : mult_output)
    if (!(v > 0)) throw SpecError("grid: multiplier values must be positive");
}

std::int64_t HpGrid::size() const {
  return static_cast<std::int64_t>(lr.size()) *
         static_cast<std::int64_t>(init.empty() ? 1 : init.size()) *
         static_cast<std::int64_t>(mult_output.empty() ? 1 : mult_output.size());
}

MuHyperparams HpGrid::point(std::int64_t i) const {
  const std::int64_t ni = init.empty() ? 1 : static_cast<std::int64_t>(init.size());
  const std::int64_t nm = mult_output.empty() ? 1 : static_cast<std::int64_t>(mult_output.size());
  const std::int64_t il = i / (ni * nm);
  const std::int64_t ii = (i / nm) % ni;
  const std::int64_t im = i % nm;
  MuHyperparams hp = base;
  hp.lr_matrix = lr[static_cast<std::size_t>(il)];
  hp.lr_other = lr[static_cast<std::size_t>(il)];
  if (!init.empty()) {
    hp.init_matrix = init[static_cast<std::size_t>(ii)];
    hp.init_other = init[static_cast<std::size_t>(ii)];
  }
  if (!mult_output.empty()) hp.mult_output = mult_output[static_cast<std::size_t>(im)];
  return hp;
}

namespace {

double effective_loss(double loss) {
  return std::isnan(loss) ? std::numeric_limits<double>::infinity() : loss;
}

// smaller lr, then smaller init, then smaller multiplier
bool tie_break_before(const MuHyperparams& a, const MuHyperparams& b) {
  if (a.lr_matrix != b.lr_matrix) return a.lr_matrix < b.lr_matrix;
  if (a.init_matrix != b.init_matrix) return a.init_matrix < b.init_matrix;
  return a.mult_output < b.mult_output;
}

void select_best(GridResult& result) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& pt = result.points[i];
    const double l = pt.diverged ? std::numeric_limits<double>::infinity()
                                 : effective_loss(pt.final_loss);
    if (l == std::numeric_limits<double>::infinity()) continue;
    if (result.best_index < 0 || l < best ||
        (l == best &&
         tie_break_before(pt.hp, result.points[static_cast<std::size_t>(result.best_index)].hp))) {
      best = l;
      result.best_index = static_cast<std::int64_t>(i);
    }
  }
  if (result.best_index < 0) throw SpecError("no basin found: every grid point diverged");
}

}  // namespace

GridResult grid_search(const HpGrid& grid, const GridRunner& runner, std::int64_t workers) {
  grid.validate();
  GridResult result;
  result.points.resize(static_cast<std::size_t>(grid.size()));
  parallel_for_indexed(grid.size(), workers, [&](std::int64_t i) {
    const MuHyperparams hp = grid.point(i);
    RunRecord rec = runner(hp, i);
    GridPoint pt;
    pt.hp = hp;
    pt.final_loss = rec.final_loss;
    pt.diverged = rec.diverged || !std::isfinite(rec.final_loss);
    pt.record = std::move(rec);
    result.points[static_cast<std::size_t>(i)] = std::move(pt);
  });
  select_best(result);
  return result;
}

GridResult grid_search_train(const ModelSpec& base_spec, const HpGrid& grid,
                             const Corpus& corpus, const TrainConfig& config,
                             std::uint64_t run_seed, std::uint64_t stream_seed,
                             std::int64_t workers) {
  base_spec.validate();
  return grid_search(
      grid,
      [&](const MuHyperparams& hp, std::int64_t index) {
        const std::uint64_t point_seed =
            mix_seed(mix_seed(run_seed, 0x67726964ULL), static_cast<std::uint64_t>(index));
        BuiltModel model = BuiltModel::build(base_spec, hp, point_seed);
        // same data seed for every point: each candidate sees the same batches
        BatchStream stream(corpus, config.batch_size, config.seq_len, stream_seed);
        RunRecord rec = train(model, stream, config, point_seed);
        rec.label = "grid[" + std::to_string(index) + "]";
        return rec;
      },
      workers);
}

GridResult grid_result_from_losses(const HpGrid& grid, const std::vector<double>& losses) {
  grid.validate();
  if (static_cast<std::int64_t>(losses.size()) != grid.size())
    throw SpecError("injected loss count " + std::to_string(losses.size()) +
                    " does not match grid size " + std::to_string(grid.size()));
  return grid_search(grid, [&](const MuHyperparams& hp, std::int64_t index) {
    RunRecord rec;
    rec.hp = hp;
    rec.label = "inject[" + std::to_string(index) + "]";
    rec.final_loss = losses[static_cast<std::size_t>(index)];
    rec.diverged = !std::isfinite(losses[static_cast<std::size_t>(index)]);
    return rec;
  });
}

std::vector<std::int64_t> basin_members(const GridResult& result, double tolerance) {
  if (result.best_index < 0) throw SpecError("basin_members: result has no finite best point");
  if (tolerance < 0) throw SpecError("basin_members: tolerance must be >= 0");
  const double best = result.best().final_loss;
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& pt = result.points[i];
    if (pt.diverged) continue;
    const double l = effective_loss(pt.final_loss);
    if (l <= best + tolerance) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

BasinAverage basin_average_losses(const std::vector<RunRecord>& runs) {
  BasinAverage out;
  std::map<std::int64_t, std::pair<double, std::int64_t>> acc;  // width -> (sum, n)
  std::map<std::int64_t, std::int64_t> seen;
  for (const auto& r : runs) {
    ++seen[r.width];
    if (r.diverged || !std::isfinite(r.final_loss)) {
      out.excluded.push_back("width " + std::to_string(r.width) + " run '" + r.label +
                             "' excluded (divergent)");
      continue;
    }
    auto& a = acc[r.width];
    a.first += r.final_loss;
    ++a.second;
  }
  for (const auto& [width, n] : seen) {
    auto it = acc.find(width);
    if (it == acc.end() || it->second.second == 0)
      throw SpecError("basin_average_losses: width " + std::to_string(width) +
                      " has no finite run");
    out.mean_loss_by_width[width] = it->second.first / static_cast<double>(it->second.second);
  }
  return out;
}

}  // namespace muscale
