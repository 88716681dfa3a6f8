#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "muscale/errors.hpp"

namespace muscale {

/// Inputs to the FLOPs/cost-ratio model for one experiment:
/// grid search at width w1 with t trials, proxy training at proxy_widths
/// (w2..wn, excluding w1 — the grid already covers it), target at target_width.
struct CostConfig {
  std::int64_t layers = 0;
  std::int64_t seq_len = 0;
  std::int64_t vocab = 0;
  std::int64_t batch = 0;
  std::int64_t grid_width = 0;
  std::int64_t grid_trials = 0;
  std::vector<std::int64_t> proxy_widths;
  std::int64_t target_width = 0;
  // Per-run step counts. Defaults make every run the same length, in which
  // case steps cancel out of the ratio.
  double grid_steps = 1.0;
  std::vector<double> proxy_steps;  // empty = all equal to grid_steps
  double target_steps = 1.0;

  void validate() const;
};

struct CostItem {
  std::string label;
  std::int64_t width = 0;
  double steps = 0.0;
  long double flops = 0.0L;
};

struct CostReport {
  std::vector<CostItem> grid_items;
  std::vector<CostItem> proxy_items;
  CostItem target_item;
  long double grid_total = 0.0L;
  long double proxy_total = 0.0L;
  long double pipeline_total = 0.0L;  // grid + proxy
  long double ratio = 0.0L;           // pipeline / target
  std::vector<std::string> notes;

  std::string table() const;
  std::string to_json() const;
};

/// Training FLOPs per step of a decoder transformer:
/// 96*B*s*l*w^2 * (1 + s/(6w) + V/(16*l*w)), evaluated in extended precision.
long double flops_per_step(std::int64_t layers, std::int64_t width, std::int64_t seq_len,
                           std::int64_t vocab, std::int64_t batch);

/// Itemized cost of the whole proxy pipeline relative to one-shot target training.
CostReport cost_ratio(const CostConfig& config);

}  // namespace muscale
