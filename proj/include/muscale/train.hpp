#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "muscale/data.hpp"
#include "muscale/model.hpp"
#include "muscale/mup.hpp"

namespace muscale {

struct TrainConfig {
  std::int64_t total_steps = 1000;
  std::int64_t warmup_steps = 100;
  double final_cosine = 1e-5;  // terminal lr of the cosine segment
  double grad_clip = 1.0;      // max global L2 norm
  std::int64_t batch_size = 16;
  std::int64_t seq_len = 128;
  std::int64_t final_loss_window = 50;  // final loss = mean of last K recorded losses
  // AdamW, weight decay fixed at 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double mlm_probability = 0.15;  // masked-lm objective only

  void validate() const;
};

/// Linear warmup 0 -> class_base_lr over warmup_steps, then cosine decay to
/// final_cosine at total_steps. Steps outside [0, total_steps] are an error.
double lr_at(std::int64_t step, const TrainConfig& config, double class_base_lr);

/// If the global L2 norm of grads exceeds max_norm, scales every gradient by
/// max_norm/norm. Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

/// One completed (or diverged) training run.
struct RunRecord {
  std::string label;  // set by orchestration (design/run id); empty for bare runs
  std::string spec_hash;
  std::int64_t width = 0;
  MuHyperparams hp;
  std::uint64_t seed = 0;
  std::int64_t steps_completed = 0;
  std::vector<double> trace;  // loss per step, truncated at divergence
  std::vector<double> trace_lr_matrix;
  std::vector<double> trace_lr_other;
  double final_loss = 0.0;  // +inf when diverged
  bool diverged = false;
  double wall_seconds = 0.0;

  /// One JSON-lines manifest entry (trace omitted; wall_seconds carries the
  /// only non-deterministic field).
  std::string to_json_line() const;
};

/// Writes the per-step trace as CSV: step,loss,lr_matrix,lr_other.
void write_trace_csv(const RunRecord& record, const std::filesystem::path& path);

/// AdamW with per-class learning rates and zero weight decay. State is
/// per-tensor and serializable for exact resume.
class AdamW {
 public:
  AdamW(const BuiltModel& model, const TrainConfig& config);

  /// Applies one update. grads must parallel model.params().
  void step(BuiltModel& model, const std::vector<Tensor>& grads, double lr_matrix,
            double lr_other);

  std::int64_t steps_taken() const { return t_; }
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::vector<State> states_;
  std::int64_t t_ = 0;
  double beta1_, beta2_, eps_;
};

/// Deterministic training loop: per-class lr schedules, global-norm clipping,
/// per-step loss trace. Divergence truncates the record and sets the flag
/// (final loss +inf); it never throws. The model is updated in place. `seed`
/// only labels the record and seeds masked-lm mask patterns; weight init and
/// batch order are fixed by the model and stream.
RunRecord train(BuiltModel& model, BatchStream& stream, const TrainConfig& config,
                std::uint64_t seed);

}  // namespace muscale
