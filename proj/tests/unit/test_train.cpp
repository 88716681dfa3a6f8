#include <doctest.h>

#include <cmath>
#include <sstream>

#include "muscale/data.hpp"
#include "muscale/train.hpp"

using namespace muscale;

namespace {

ModelSpec toy_spec(std::int64_t width = 32) {
  ModelSpec s;
  s.architecture = Architecture::gpt_block;
  s.n_layer = 2;
  s.width = width;
  s.head_size = 16;
  s.vocab_size = 256;
  s.block_size = 64;
  return s;
}

MuHyperparams toy_hp(double lr = 1e-2) {
  MuHyperparams hp;
  hp.lr_matrix = lr;
  hp.lr_other = lr;
  hp.init_matrix = 0.05;
  hp.init_other = 0.05;
  hp.init_scale = InitScale::stddev;
  hp.mult_output = 1.0;
  hp.base_width = 32;
  return hp;
}

TrainConfig toy_config(std::int64_t steps) {
  TrainConfig cfg;
  cfg.total_steps = steps;
  cfg.warmup_steps = steps / 10;
  cfg.batch_size = 8;
  cfg.seq_len = 64;
  cfg.final_loss_window = 50;
  return cfg;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("lr schedule: ramp start, ramp end, cosine floor") {
  TrainConfig cfg;
  cfg.total_steps = 7000;
  cfg.warmup_steps = 5000;
  cfg.final_cosine = 1e-5;
  const double base = 3e-2;
  CHECK(lr_at(0, cfg, base) == 0.0);
  CHECK(lr_at(5000, cfg, base) == doctest::Approx(base).epsilon(1e-15));
  CHECK(lr_at(7000, cfg, base) == doctest::Approx(1e-5).epsilon(1e-12));
  // halfway through the cosine segment: final + (base-final)/2
  CHECK(lr_at(6000, cfg, base) == doctest::Approx(1e-5 + (base - 1e-5) / 2).epsilon(1e-12));
  // linear in the ramp
  CHECK(lr_at(2500, cfg, base) == doctest::Approx(base / 2).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, cfg, base), SpecError);
  CHECK_THROWS_AS(lr_at(7001, cfg, base), SpecError);
}

TEST_CASE("clip_global_norm") {
  std::vector<Tensor> grads;
  grads.push_back(Tensor({3}, {0.3, 0.0, 0.4}));  // norm 0.5
  const auto before = grads[0].data;
  CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(0.5));
  CHECK(grads[0].data == before);

  grads[0] = Tensor({3}, {0.0, 1.2, 1.6});  // norm 2
  CHECK(clip_global_norm(grads, 1.0) == doctest::Approx(2.0));
  CHECK(grads[0].data[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(grads[0].data[2] == doctest::Approx(0.8).epsilon(1e-15));

  grads[0] = Tensor::zeros({4});
  grads.push_back(Tensor::zeros({2}));
  CHECK(clip_global_norm(grads, 1.0) == 0.0);
  for (const auto& g : grads)
    for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("step-0 recorded loss is ln V") {
  const ModelSpec spec = toy_spec();
  BuiltModel model = BuiltModel::build(spec, toy_hp(), 5);
  const Corpus corpus = synth_corpus(SynthKind::text, 20000, 256, 2);
  BatchStream stream(corpus, 8, 64, 3);
  const RunRecord rec = train(model, stream, toy_config(3), 5);
  REQUIRE(rec.trace.size() == 3);
  CHECK(std::abs(rec.trace[0] - std::log(256.0)) < 1e-9);
}

TEST_CASE("identical seed and stream give bit-identical traces") {
  const Corpus corpus = synth_corpus(SynthKind::text, 20000, 256, 2);
  auto run = [&] {
    BuiltModel model = BuiltModel::build(toy_spec(), toy_hp(), 11);
    BatchStream stream(corpus, 8, 64, 3);
    return train(model, stream, toy_config(20), 11);
  };
  const RunRecord a = run();
  const RunRecord b = run();
  CHECK(a.trace == b.trace);
  CHECK(a.final_loss == b.final_loss);
}

TEST_CASE("the toy run learns: loss drops from ln V") {
  // threshold frozen from the observed reference run of this exact setup
  BuiltModel model = BuiltModel::build(toy_spec(48), toy_hp(2e-2), 7);
  const Corpus corpus = synth_corpus(SynthKind::text, 200000, 256, 4);
  BatchStream stream(corpus, 8, 64, 9);
  const RunRecord rec = train(model, stream, toy_config(300), 7);
  CHECK_FALSE(rec.diverged);
  CHECK(rec.trace[0] - rec.final_loss >= 0.5);
}

TEST_CASE("zero learning rate leaves parameters bit-unchanged") {
  BuiltModel model = BuiltModel::build(toy_spec(), toy_hp(), 13);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.params()) before.push_back(p.value.data);
  AdamW opt(model, toy_config(10));
  std::vector<Tensor> grads;
  Rng rng(77);
  for (const auto& p : model.params()) grads.push_back(Tensor::randn(p.value.shape, rng, 0.1));
  for (int i = 0; i < 5; ++i) opt.step(model, grads, 0.0, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params()[i].value.data == before[i]);
}

TEST_CASE("per-class lr routing: zero other-lr freezes non-matrix tensors") {
  BuiltModel model = BuiltModel::build(toy_spec(), toy_hp(), 17);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.params()) before.push_back(p.value.data);
  AdamW opt(model, toy_config(10));
  std::vector<Tensor> grads;
  Rng rng(78);
  for (const auto& p : model.params()) grads.push_back(Tensor::randn(p.value.shape, rng, 0.1));
  opt.step(model, grads, 1e-2, 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool changed = model.params()[i].value.data != before[i];
    CHECK(changed == (model.params()[i].cls == ParamClass::matrix_like));
  }
}

TEST_CASE("trace lr columns equal the schedule for both classes") {
  MuHyperparams hp = toy_hp();
  hp.lr_matrix = 4e-2;
  hp.lr_other = 1e-2;
  BuiltModel model = BuiltModel::build(toy_spec(), hp, 19);
  const Corpus corpus = synth_corpus(SynthKind::text, 20000, 256, 2);
  BatchStream stream(corpus, 8, 64, 3);
  const TrainConfig cfg = toy_config(12);
  const RunRecord rec = train(model, stream, cfg, 19);
  for (std::size_t s = 0; s < rec.trace.size(); ++s) {
    CHECK(rec.trace_lr_matrix[s] == lr_at(static_cast<std::int64_t>(s), cfg, 4e-2));
    CHECK(rec.trace_lr_other[s] == lr_at(static_cast<std::int64_t>(s), cfg, 1e-2));
    if (s > 0) CHECK(rec.trace_lr_matrix[s] != rec.trace_lr_other[s]);
  }
}

TEST_CASE("divergence truncates the record, sets the flag, and never throws") {
  // an absurd lr drives attention logits past the double range within steps
  MuHyperparams hp = toy_hp(1e155);
  BuiltModel model = BuiltModel::build(toy_spec(), hp, 23);
  const Corpus corpus = synth_corpus(SynthKind::uniform, 20000, 256, 2);
  BatchStream stream(corpus, 8, 64, 3);
  TrainConfig cfg = toy_config(50);
  cfg.warmup_steps = 0;
  const RunRecord rec = train(model, stream, cfg, 23);
  CHECK(rec.diverged);
  CHECK(std::isinf(rec.final_loss));
  CHECK(rec.trace.size() < 50);
  CHECK(!rec.trace.empty());
  CHECK(std::abs(rec.trace[0] - std::log(256.0)) < 1e-9);
}

TEST_CASE("checkpointed optimizer state resumes bit-exactly") {
  const Corpus corpus = synth_corpus(SynthKind::text, 20000, 256, 2);
  const TrainConfig cfg = toy_config(20);

  BuiltModel a = BuiltModel::build(toy_spec(), toy_hp(), 31);
  BatchStream sa(corpus, 8, 64, 3);
  const RunRecord ra = train(a, sa, cfg, 31);

  // same run split in half with a checkpoint in the middle
  BuiltModel b = BuiltModel::build(toy_spec(), toy_hp(), 31);
  BatchStream sb(corpus, 8, 64, 3);
  AdamW opt(b, cfg);
  std::vector<Tensor> grads;
  auto one_step = [&](AdamW& o, std::int64_t step) {
    Batch batch = sb.next();
    BuiltModel::StepGraph sg = b.forward(batch);
    sg.graph.backward(sg.loss);
    grads.clear();
    for (NodeId id : sg.param_ids) grads.push_back(sg.graph.grad(id));
    clip_global_norm(grads, cfg.grad_clip);
    o.step(b, grads, lr_at(step, cfg, b.hp().lr_matrix), lr_at(step, cfg, b.hp().lr_other));
  };
  for (std::int64_t s = 0; s < 10; ++s) one_step(opt, s);
  std::stringstream ck;
  opt.save(ck);
  AdamW opt2(b, cfg);
  opt2.load(ck);
  for (std::int64_t s = 10; s < 20; ++s) one_step(opt2, s);

  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].value.data == b.params()[i].value.data);
  (void)ra;
}

TEST_CASE("masked-lm training runs and stays deterministic") {
  ModelSpec spec = toy_spec();
  spec.objective = Objective::masked_lm;
  const Corpus corpus = synth_corpus(SynthKind::text, 20000, 256, 2);
  auto run = [&] {
    BuiltModel model = BuiltModel::build(spec, toy_hp(), 37);
    BatchStream stream(corpus, 8, 64, 3);
    return train(model, stream, toy_config(15), 37);
  };
  const RunRecord a = run();
  const RunRecord b = run();
  CHECK_FALSE(a.diverged);
  CHECK(a.trace == b.trace);
  CHECK(std::abs(a.trace[0] - std::log(256.0)) < 1e-9);
}

TEST_CASE("config validation") {
  TrainConfig cfg = toy_config(10);
  cfg.warmup_steps = 20;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = toy_config(10);
  cfg.grad_clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
}

}  // TEST_SUITE
