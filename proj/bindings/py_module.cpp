// Python surface for the main operations: μTransfer, parameter counting,
// power-law fitting/prediction, FLOPs accounting, corpus generation, proxy
// training, and the full paradigm loop driven by a JSON config.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "muscale/pipeline.hpp"

namespace py = pybind11;
using namespace muscale;

namespace {

Architecture arch_from(const std::string& s) {
  if (s == "gpt") return Architecture::gpt_block;
  if (s == "llama") return Architecture::llama_block;
  throw SpecError("architecture must be 'gpt' or 'llama', got '" + s + "'");
}

Objective objective_from(const std::string& s) {
  if (s == "causal-lm") return Objective::causal_lm;
  if (s == "masked-lm") return Objective::masked_lm;
  throw SpecError("objective must be 'causal-lm' or 'masked-lm', got '" + s + "'");
}

InitScale init_scale_from(const std::string& s) {
  if (s == "variance") return InitScale::variance;
  if (s == "stddev") return InitScale::stddev;
  throw SpecError("init_scale must be 'variance' or 'stddev', got '" + s + "'");
}

SynthKind synth_kind_from(const std::string& s) {
  if (s == "uniform") return SynthKind::uniform;
  if (s == "markov") return SynthKind::markov;
  if (s == "text") return SynthKind::text;
  throw SpecError("synth kind must be 'uniform', 'markov', or 'text', got '" + s + "'");
}

PowerLawFit fit_from_lists(const std::vector<double>& counts, const std::vector<double>& losses,
                           const std::vector<double>& weights, double units) {
  if (counts.size() != losses.size())
    throw FitError("counts and losses must have equal length");
  if (!weights.empty() && weights.size() != counts.size())
    throw FitError("weights must be empty or match the points");
  std::vector<FitPoint> pts;
  for (std::size_t i = 0; i < counts.size(); ++i)
    pts.emplace_back(counts[i], losses[i], weights.empty() ? 1.0 : weights[i]);
  FitOptions opt;
  opt.units = units;
  return fit_power_law(pts, opt);
}

RunRecord train_lm(const ModelSpec& spec, const MuHyperparams& hp, const Corpus& corpus,
                   std::int64_t total_steps, std::int64_t warmup_steps, std::int64_t batch_size,
                   std::int64_t seq_len, std::uint64_t seed, std::uint64_t data_seed,
                   double grad_clip, std::int64_t final_loss_window) {
  TrainConfig cfg;
  cfg.total_steps = total_steps;
  cfg.warmup_steps = warmup_steps;
  cfg.batch_size = batch_size;
  cfg.seq_len = seq_len;
  cfg.grad_clip = grad_clip;
  cfg.final_loss_window = final_loss_window;
  BuiltModel model = BuiltModel::build(spec, hp, seed);
  BatchStream stream(corpus, batch_size, seq_len, data_seed);
  return train(model, stream, cfg, seed);
}

py::dict paradigm_from_json(const std::string& config_text) {
  const ExperimentConfig cfg = ExperimentConfig::from_json(config_text);
  const ParadigmResult result = run_paradigm(cfg);
  py::dict out;
  py::list designs;
  for (const auto& dr : result.designs) {
    py::dict d;
    d["name"] = dr.name;
    d["failed"] = dr.failed;
    if (dr.failed) {
      d["failure"] = dr.failure;
    } else {
      d["predicted_loss"] = dr.predicted.loss;
      d["predicted_sigma"] = dr.predicted.sigma;
      d["target_count"] = dr.target_count;
      d["fit"] = py::make_tuple(dr.fit.a, dr.fit.b, dr.fit.c);
      d["cost_ratio"] = static_cast<double>(dr.cost.ratio);
      d["best_lr"] = dr.base_hp.lr_matrix;
    }
    designs.append(d);
  }
  out["designs"] = designs;
  out["winner"] = result.winner;
  py::list ranking;
  for (auto i : result.ranking) ranking.append(i);
  out["ranking"] = ranking;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "loss prediction for wide transformers from narrow muP proxies";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](const std::string& architecture, const std::string& objective,
                       std::int64_t n_layer, std::int64_t width, std::int64_t head_size,
                       std::int64_t vocab_size, std::int64_t block_size,
                       const std::string& attn_scale) {
             ModelSpec s;
             s.architecture = arch_from(architecture);
             s.objective = objective_from(objective);
             s.n_layer = n_layer;
             s.width = width;
             s.head_size = head_size;
             s.vocab_size = vocab_size;
             s.block_size = block_size;
             s.attn_scale =
                 attn_scale == "one-over-sqrt-d" ? AttnScale::one_over_sqrt_d : AttnScale::one_over_d;
             s.validate();
             return s;
           }),
           py::arg("architecture") = "gpt", py::arg("objective") = "causal-lm",
           py::arg("n_layer") = 12, py::arg("width") = 256, py::arg("head_size") = 64,
           py::arg("vocab_size") = 50304, py::arg("block_size") = 1024,
           py::arg("attn_scale") = "one-over-d")
      .def_readonly("n_layer", &ModelSpec::n_layer)
      .def_readonly("width", &ModelSpec::width)
      .def_readonly("head_size", &ModelSpec::head_size)
      .def_readonly("vocab_size", &ModelSpec::vocab_size)
      .def_readonly("block_size", &ModelSpec::block_size)
      .def("n_head", &ModelSpec::n_head)
      .def("with_width", &ModelSpec::with_width, py::arg("width"))
      .def("to_json", &ModelSpec::to_json)
      .def("__repr__", [](const ModelSpec& s) { return "ModelSpec(" + s.to_json() + ")"; });

  py::class_<MuHyperparams>(m, "MuHyperparams")
      .def(py::init([](double lr, double lr_other, double init, double init_other,
                       double output_mult, double mult_other, const std::string& init_scale,
                       double base_width) {
             MuHyperparams hp;
             hp.lr_matrix = lr;
             hp.lr_other = lr_other > 0 ? lr_other : lr;
             hp.init_matrix = init;
             hp.init_other = init_other > 0 ? init_other : init;
             hp.mult_output = output_mult;
             hp.mult_other = mult_other;
             hp.init_scale = init_scale_from(init_scale);
             hp.base_width = base_width;
             hp.validate();
             return hp;
           }),
           py::arg("lr") = 1e-3, py::arg("lr_other") = 0.0, py::arg("init") = 0.02,
           py::arg("init_other") = 0.0, py::arg("output_mult") = 1.0, py::arg("mult_other") = 1.0,
           py::arg("init_scale") = "variance", py::arg("base_width") = 0.0)
      .def_readonly("lr_matrix", &MuHyperparams::lr_matrix)
      .def_readonly("lr_other", &MuHyperparams::lr_other)
      .def_readonly("init_matrix", &MuHyperparams::init_matrix)
      .def_readonly("init_other", &MuHyperparams::init_other)
      .def_readonly("mult_output", &MuHyperparams::mult_output)
      .def_readonly("mult_other", &MuHyperparams::mult_other)
      .def_readonly("base_width", &MuHyperparams::base_width);

  m.def(
      "transfer",
      [](const MuHyperparams& hp, std::int64_t base_width, std::int64_t target_width) {
        return transfer(hp, width_ratio(base_width, target_width));
      },
      py::arg("hp"), py::arg("base_width"), py::arg("target_width"),
      "Map base-width hyperparameters to a target width per the muP rules.");

  m.def("count_params", &count_params, py::arg("spec"), py::arg("include_embeddings") = true);

  py::class_<PowerLawFit>(m, "PowerLawFit")
      .def_readonly("a", &PowerLawFit::a)
      .def_readonly("b", &PowerLawFit::b)
      .def_readonly("c", &PowerLawFit::c)
      .def_readonly("units", &PowerLawFit::units)
      .def_readonly("iterations", &PowerLawFit::iterations)
      .def_readonly("converged", &PowerLawFit::converged)
      .def_readonly("ssr", &PowerLawFit::ssr)
      .def_property_readonly("covariance",
                             [](const PowerLawFit& f) {
                               py::list rows;
                               for (const auto& row : f.covariance) {
                                 py::list r;
                                 for (double v : row) r.append(v);
                                 rows.append(r);
                               }
                               return rows;
                             })
      .def_property_readonly("residuals",
                             [](const PowerLawFit& f) { return f.residuals; })
      .def("to_json", &PowerLawFit::to_json)
      .def("__repr__", [](const PowerLawFit& f) {
        std::ostringstream os;
        os << "PowerLawFit(a=" << f.a << ", b=" << f.b << ", c=" << f.c << ")";
        return os.str();
      });

  m.def("fit_power_law", &fit_from_lists, py::arg("counts"), py::arg("losses"),
        py::arg("weights") = std::vector<double>{}, py::arg("units") = 1e9,
        "Fit L = a*C^b + c by damped least squares with multi-start.");

  m.def(
      "predict",
      [](const PowerLawFit& fit, double count) {
        const Prediction p = predict(fit, count);
        return py::make_tuple(p.loss, p.sigma);
      },
      py::arg("fit"), py::arg("count"), "Returns (loss, 1-sigma band) at a parameter count.");

  m.def(
      "flops_per_step",
      [](std::int64_t layers, std::int64_t width, std::int64_t seq_len, std::int64_t vocab,
         std::int64_t batch) {
        return static_cast<double>(flops_per_step(layers, width, seq_len, vocab, batch));
      },
      py::arg("layers"), py::arg("width"), py::arg("seq_len"), py::arg("vocab"), py::arg("batch"));

  m.def(
      "cost_ratio",
      [](std::int64_t layers, std::int64_t seq_len, std::int64_t vocab, std::int64_t batch,
         std::int64_t grid_width, std::int64_t grid_trials,
         const std::vector<std::int64_t>& proxy_widths, std::int64_t target_width) {
        CostConfig cc;
        cc.layers = layers;
        cc.seq_len = seq_len;
        cc.vocab = vocab;
        cc.batch = batch;
        cc.grid_width = grid_width;
        cc.grid_trials = grid_trials;
        cc.proxy_widths = proxy_widths;
        cc.target_width = target_width;
        const CostReport rep = cost_ratio(cc);
        py::dict out;
        out["ratio"] = static_cast<double>(rep.ratio);
        out["grid_total"] = static_cast<double>(rep.grid_total);
        out["proxy_total"] = static_cast<double>(rep.proxy_total);
        out["pipeline_total"] = static_cast<double>(rep.pipeline_total);
        out["target_total"] = static_cast<double>(rep.target_item.flops);
        out["notes"] = rep.notes;
        return out;
      },
      py::arg("layers"), py::arg("seq_len"), py::arg("vocab"), py::arg("batch"),
      py::arg("grid_width"), py::arg("grid_trials"), py::arg("proxy_widths"),
      py::arg("target_width"));

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("vocab_size", [](const Corpus& c) { return c.vocab_size; })
      .def("__len__", [](const Corpus& c) { return c.size(); })
      .def("tokens", [](const Corpus& c, std::int64_t limit) {
        std::vector<std::uint32_t> out;
        for (std::int64_t i = 0; i < std::min<std::int64_t>(limit, c.size()); ++i)
          out.push_back(c.tokens[static_cast<std::size_t>(i)]);
        return out;
      }, py::arg("limit") = 64);

  m.def(
      "synth_corpus",
      [](const std::string& kind, std::int64_t size, std::int64_t vocab, std::uint64_t seed) {
        return synth_corpus(synth_kind_from(kind), size, vocab, seed);
      },
      py::arg("kind"), py::arg("size"), py::arg("vocab"), py::arg("seed") = 0);
  m.def("load_corpus",
        [](const std::string& path) { return load_corpus(resolve_corpus_path(path)); },
        py::arg("path"));
  m.def("save_corpus",
        [](const Corpus& c, const std::string& path) { save_corpus(c, path); },
        py::arg("corpus"), py::arg("path"));

  py::class_<RunRecord>(m, "RunRecord")
      .def_readonly("width", &RunRecord::width)
      .def_readonly("final_loss", &RunRecord::final_loss)
      .def_readonly("diverged", &RunRecord::diverged)
      .def_readonly("steps_completed", &RunRecord::steps_completed)
      .def_property_readonly("trace", [](const RunRecord& r) { return r.trace; })
      .def("__repr__", [](const RunRecord& r) {
        std::ostringstream os;
        os << "RunRecord(width=" << r.width << ", final_loss=" << r.final_loss
           << ", diverged=" << (r.diverged ? "True" : "False") << ")";
        return os.str();
      });

  m.def("train_lm", &train_lm, py::arg("spec"), py::arg("hp"), py::arg("corpus"),
        py::arg("total_steps") = 100, py::arg("warmup_steps") = 10, py::arg("batch_size") = 8,
        py::arg("seq_len") = 64, py::arg("seed") = 1, py::arg("data_seed") = 7,
        py::arg("grad_clip") = 1.0, py::arg("final_loss_window") = 50,
        "Build and train one causal/masked LM; returns its run record.");

  m.def(
      "grid_argmin",
      [](const std::vector<double>& lrs, const std::vector<double>& losses) {
        HpGrid g;
        g.lr = lrs;
        const GridResult r = grid_result_from_losses(g, losses);
        return py::make_tuple(r.best_index, r.best().hp.lr_matrix);
      },
      py::arg("lrs"), py::arg("losses"),
      "Divergence-aware argmin over an lr axis; returns (index, lr).");

  m.def("run_paradigm", &paradigm_from_json, py::arg("config_json"),
        "Run the full research-without-re-search loop from a JSON config string.");
}
