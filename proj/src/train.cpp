#include "muscale/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "muscale/json_util.hpp"

namespace muscale {

void TrainConfig::validate() const {
  if (total_steps < 1) throw SpecError("total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw SpecError("warmup_steps must be in [0, total_steps]");
  if (grad_clip <= 0) throw SpecError("grad_clip must be > 0");
  if (batch_size < 1) throw SpecError("batch_size must be >= 1");
  if (seq_len < 1) throw SpecError("seq_len must be >= 1");
  if (final_loss_window < 1) throw SpecError("final_loss_window must be >= 1");
  if (final_cosine < 0) throw SpecError("final_cosine must be >= 0");
}

double lr_at(std::int64_t step, const TrainConfig& config, double class_base_lr) {
  if (step < 0 || step > config.total_steps)
    throw SpecError("lr_at: step " + std::to_string(step) + " outside [0, " +
                    std::to_string(config.total_steps) + "]");
  if (step < config.warmup_steps)
    return class_base_lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  if (config.total_steps == config.warmup_steps) return class_base_lr;
  const double progress = static_cast<double>(step - config.warmup_steps) /
                          static_cast<double>(config.total_steps - config.warmup_steps);
  return config.final_cosine +
         0.5 * (class_base_lr - config.final_cosine) *
             (1.0 + std::cos(3.14159265358979323846 * progress));
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0) throw SpecError("clip_global_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g.data) v *= s;
  }
  return norm;
}

AdamW::AdamW(const BuiltModel& model, const TrainConfig& config)
    : beta1_(config.beta1), beta2_(config.beta2), eps_(config.adam_eps) {
  for (const auto& p : model.params()) {
    states_.push_back({std::vector<double>(p.value.data.size(), 0.0),
                       std::vector<double>(p.value.data.size(), 0.0)});
  }
}

void AdamW::step(BuiltModel& model, const std::vector<Tensor>& grads, double lr_matrix,
                 double lr_other) {
  auto& params = model.params();
  if (grads.size() != params.size() || states_.size() != params.size())
    throw UsageError("AdamW::step: gradient/state count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr = params[i].cls == ParamClass::matrix_like ? lr_matrix : lr_other;
    auto& p = params[i].value.data;
    const auto& g = grads[i].data;
    auto& m = states_[i].m;
    auto& v = states_[i].v;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void AdamW::save(std::ostream& out) const {
  const std::uint64_t n = states_.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  for (const auto& s : states_) {
    const std::uint64_t len = s.m.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(reinterpret_cast<const char*>(s.m.data()), static_cast<std::streamsize>(len * 8));
    out.write(reinterpret_cast<const char*>(s.v.data()), static_cast<std::streamsize>(len * 8));
  }
}

void AdamW::load(std::istream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  if (!in || n != states_.size()) throw FormatError("AdamW::load: state count mismatch");
  for (auto& s : states_) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len != s.m.size()) throw FormatError("AdamW::load: tensor size mismatch");
    in.read(reinterpret_cast<char*>(s.m.data()), static_cast<std::streamsize>(len * 8));
    in.read(reinterpret_cast<char*>(s.v.data()), static_cast<std::streamsize>(len * 8));
  }
  if (!in) throw FormatError("AdamW::load: truncated state");
}

RunRecord train(BuiltModel& model, BatchStream& stream, const TrainConfig& config,
                std::uint64_t seed) {
  config.validate();
  if (stream.vocab_size() != model.spec().vocab_size)
    throw SpecError("model and stream vocab sizes differ");
  if (stream.batch_size() != config.batch_size || stream.seq_len() != config.seq_len)
    throw SpecError("stream batch/seq do not match the train config");

  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.spec_hash = model.spec().hash();
  rec.width = model.spec().width;
  rec.hp = model.hp();
  rec.seed = seed;

  AdamW opt(model, config);
  const bool masked = model.spec().objective == Objective::masked_lm;
  std::vector<Tensor> grads;

  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    Batch batch = stream.next();
    if (masked) {
      MaskedBatch mb = masked_lm_batch(batch.inputs, model.spec().vocab_size,
                                       config.mlm_probability,
                                       mix_seed(seed, static_cast<std::uint64_t>(step)));
      batch.inputs = std::move(mb.inputs);
      batch.targets = std::move(mb.labels);
    }
    const double lr_m = lr_at(step, config, model.hp().lr_matrix);
    const double lr_o = lr_at(step, config, model.hp().lr_other);
    try {
      BuiltModel::StepGraph sg = model.forward(batch);
      const double loss = sg.graph.value(sg.loss).data[0];
      rec.trace.push_back(loss);
      rec.trace_lr_matrix.push_back(lr_m);
      rec.trace_lr_other.push_back(lr_o);
      sg.graph.backward(sg.loss);
      grads.clear();
      for (NodeId id : sg.param_ids) grads.push_back(sg.graph.grad(id));
      const double norm = clip_global_norm(grads, config.grad_clip);
      if (!std::isfinite(norm)) {
        // finite per-coordinate gradients can still overflow the norm; a
        // zero-scale "clip" would silently freeze the run instead of flagging it
        rec.diverged = true;
        break;
      }
      opt.step(model, grads, lr_m, lr_o);
    } catch (const DivergenceSignal&) {
      rec.diverged = true;
      break;
    }
    rec.steps_completed = step + 1;
  }

  if (rec.diverged) {
    rec.final_loss = std::numeric_limits<double>::infinity();
  } else {
    const std::int64_t n = static_cast<std::int64_t>(rec.trace.size());
    const std::int64_t k = std::min<std::int64_t>(config.final_loss_window, n);
    double sum = 0.0;
    for (std::int64_t i = n - k; i < n; ++i) sum += rec.trace[static_cast<std::size_t>(i)];
    rec.final_loss = sum / static_cast<double>(k);
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::string RunRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["spec_hash"] = spec_hash;
  j["width"] = width;
  j["hp"] = hp_to_json(hp);
  j["seed"] = seed;
  j["steps_completed"] = steps_completed;
  j["final_loss"] = json_finite(final_loss);
  j["diverged"] = diverged;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

void write_trace_csv(const RunRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write trace csv " + path.string());
  out << "step,loss,lr_matrix,lr_other\n";
  for (std::size_t i = 0; i < record.trace.size(); ++i) {
    out << i << ',' << record.trace[i] << ',' << record.trace_lr_matrix[i] << ','
        << record.trace_lr_other[i] << '\n';
  }
}

}  // namespace muscale
