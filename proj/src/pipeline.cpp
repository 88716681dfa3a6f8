#include "muscale/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "muscale/json_util.hpp"
#include "muscale/parallel.hpp"

namespace muscale {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// configuration

void ExperimentConfig::validate() const {
  if (designs.empty()) return;  // an empty design set is a valid no-op experiment
  std::set<std::string> names;
  for (const auto& d : designs) {
    if (d.name.empty()) throw SpecError("config: design name must be non-empty");
    if (!names.insert(d.name).second)
      throw SpecError("config: duplicate design name '" + d.name + "'");
    d.spec.validate();
  }
  if (widths.base <= 0) throw SpecError("config: base width must be positive");
  if (widths.proxies.empty()) throw SpecError("config: at least one proxy width required");
  std::int64_t prev = 0;
  for (auto w : widths.proxies) {
    if (w <= prev) throw SpecError("config: proxy widths must be ascending and positive");
    prev = w;
  }
  const bool base_listed =
      std::find(widths.proxies.begin(), widths.proxies.end(), widths.base) !=
      widths.proxies.end();
  if (!base_listed && widths.base > widths.proxies.front())
    throw SpecError("config: base width must be a proxy width or the smallest width");
  if (widths.target <= widths.proxies.back())
    throw SpecError("config: target width must exceed every proxy width");
  grid.validate();
  train.validate();
  if (basin_tolerance < 0) throw SpecError("config: basin_tolerance must be >= 0");
  for (const auto& [name, inj] : inject) {
    if (names.find(name) == names.end())
      throw SpecError("config: injection for unknown design '" + name + "'");
    if (!inj.grid.empty() && static_cast<std::int64_t>(inj.grid.size()) != grid.size())
      throw SpecError("config: injected grid for '" + name + "' has " +
                      std::to_string(inj.grid.size()) + " losses, grid has " +
                      std::to_string(grid.size()) + " points");
  }
}

std::int64_t ExperimentConfig::effective_workers() const {
  return workers > 0 ? workers : default_workers();
}

namespace {

std::vector<double> number_or_array(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  return v.get<std::vector<double>>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("designs")) {
      for (const auto& dj : j.at("designs")) {
        DesignConfig d;
        d.name = dj.at("name").get<std::string>();
        d.spec = ModelSpec::from_json(dj.dump());
        cfg.designs.push_back(std::move(d));
      }
    }
    if (j.contains("widths")) {
      const auto& wj = j.at("widths");
      cfg.widths.base = wj.at("base").get<std::int64_t>();
      cfg.widths.proxies = wj.at("proxies").get<std::vector<std::int64_t>>();
      cfg.widths.target = wj.at("target").get<std::int64_t>();
    }
    if (j.contains("grid")) {
      const auto& gj = j.at("grid");
      cfg.grid.lr = number_or_array(gj, "base_lr");
      cfg.grid.init = number_or_array(gj, "init");
      cfg.grid.mult_output = number_or_array(gj, "output_mult");
      if (gj.contains("mult_other")) cfg.grid.base.mult_other = gj.at("mult_other").get<double>();
      if (gj.contains("init_scale")) {
        const std::string s = gj.at("init_scale").get<std::string>();
        if (s == "variance")
          cfg.grid.base.init_scale = InitScale::variance;
        else if (s == "stddev")
          cfg.grid.base.init_scale = InitScale::stddev;
        else
          throw SpecError("config: init_scale must be 'variance' or 'stddev'");
      }
      // singleton axes fall back onto the base point
      if (!cfg.grid.init.empty()) {
        cfg.grid.base.init_matrix = cfg.grid.init.front();
        cfg.grid.base.init_other = cfg.grid.init.front();
      }
      if (!cfg.grid.mult_output.empty()) cfg.grid.base.mult_output = cfg.grid.mult_output.front();
    }
    if (j.contains("hp")) {
      const auto& hj = j.at("hp");
      MuHyperparams hp = cfg.grid.base;
      if (hj.contains("lr")) {
        hp.lr_matrix = hj.at("lr").get<double>();
        hp.lr_other = hp.lr_matrix;
      }
      if (hj.contains("lr_other")) hp.lr_other = hj.at("lr_other").get<double>();
      if (hj.contains("init")) {
        hp.init_matrix = hj.at("init").get<double>();
        hp.init_other = hp.init_matrix;
      }
      if (hj.contains("output_mult")) hp.mult_output = hj.at("output_mult").get<double>();
      if (hj.contains("mult_other")) hp.mult_other = hj.at("mult_other").get<double>();
      if (hj.contains("init_scale"))
        hp.init_scale = hj.at("init_scale").get<std::string>() == "stddev" ? InitScale::stddev
                                                                           : InitScale::variance;
      cfg.explicit_hp = hp;
    }
    if (j.contains("data")) {
      const auto& dj = j.at("data");
      if (dj.contains("corpus")) cfg.data.corpus_path = dj.at("corpus").get<std::string>();
      if (dj.contains("synth")) {
        const auto& sj = dj.at("synth");
        const std::string kind = sj.value("kind", std::string("text"));
        if (kind == "uniform")
          cfg.data.synth_kind = SynthKind::uniform;
        else if (kind == "markov")
          cfg.data.synth_kind = SynthKind::markov;
        else if (kind == "text")
          cfg.data.synth_kind = SynthKind::text;
        else
          throw SpecError("config: unknown synth kind '" + kind + "'");
        if (sj.contains("size")) cfg.data.synth_size = sj.at("size").get<std::int64_t>();
        if (sj.contains("vocab")) cfg.data.synth_vocab = sj.at("vocab").get<std::int64_t>();
      }
      if (dj.contains("seed")) cfg.data.seed = dj.at("seed").get<std::uint64_t>();
    }
    if (j.contains("train")) {
      const auto& tj = j.at("train");
      if (tj.contains("total_steps")) cfg.train.total_steps = tj.at("total_steps").get<std::int64_t>();
      if (tj.contains("warmup_steps"))
        cfg.train.warmup_steps = tj.at("warmup_steps").get<std::int64_t>();
      if (tj.contains("final_cosine")) cfg.train.final_cosine = tj.at("final_cosine").get<double>();
      if (tj.contains("grad_clip")) cfg.train.grad_clip = tj.at("grad_clip").get<double>();
      if (tj.contains("batch_size")) cfg.train.batch_size = tj.at("batch_size").get<std::int64_t>();
      if (tj.contains("input_length")) cfg.train.seq_len = tj.at("input_length").get<std::int64_t>();
      if (tj.contains("final_loss_window"))
        cfg.train.final_loss_window = tj.at("final_loss_window").get<std::int64_t>();
      if (tj.contains("mlm_probability"))
        cfg.train.mlm_probability = tj.at("mlm_probability").get<double>();
    }
    if (j.contains("fit")) {
      const auto& fj = j.at("fit");
      if (fj.contains("units")) cfg.fit.options.units = fj.at("units").get<double>();
      if (fj.contains("include_embeddings"))
        cfg.fit.include_embeddings = fj.at("include_embeddings").get<bool>();
      if (fj.contains("ablate_embeddings"))
        cfg.fit.ablate_embeddings = fj.at("ablate_embeddings").get<bool>();
      if (fj.contains("b_starts"))
        cfg.fit.options.b_starts = fj.at("b_starts").get<std::vector<double>>();
      if (fj.contains("max_iterations"))
        cfg.fit.options.max_iterations = fj.at("max_iterations").get<int>();
    }
    if (j.contains("basin_tolerance")) cfg.basin_tolerance = j.at("basin_tolerance").get<double>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<std::int64_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("inject")) {
      for (const auto& [name, ij] : j.at("inject").items()) {
        InjectedLosses inj;
        if (ij.contains("grid")) inj.grid = ij.at("grid").get<std::vector<double>>();
        if (ij.contains("proxies")) {
          for (const auto& [w, loss] : ij.at("proxies").items())
            inj.proxy_loss[std::stoll(w)] = loss.get<double>();
        }
        cfg.inject[name] = std::move(inj);
      }
    }
  } catch (const json::exception& e) {
    throw SpecError(std::string("config: ") + e.what());
  }
  cfg.grid.base.base_width = static_cast<double>(cfg.widths.base);
  if (cfg.explicit_hp) cfg.explicit_hp->base_width = static_cast<double>(cfg.widths.base);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Corpus ExperimentConfig::load_data() const {
  if (!data.corpus_path.empty()) return load_corpus(resolve_corpus_path(data.corpus_path));
  return synth_corpus(data.synth_kind, data.synth_size, data.synth_vocab, data.seed);
}

// ---------------------------------------------------------------------------
// the paradigm loop

namespace {

bool fully_injected(const ExperimentConfig& config, const DesignConfig& design) {
  const auto it = config.inject.find(design.name);
  if (it == config.inject.end()) return false;
  if (it->second.grid.empty()) return false;
  for (auto w : config.widths.proxies)
    if (it->second.proxy_loss.find(w) == it->second.proxy_loss.end()) return false;
  return true;
}

RunRecord injected_record(const ModelSpec& spec, const MuHyperparams& hp, double loss,
                          const std::string& label) {
  RunRecord rec;
  rec.label = label;
  rec.spec_hash = spec.hash();
  rec.width = spec.width;
  rec.hp = hp;
  rec.final_loss = loss;
  rec.diverged = !std::isfinite(loss);
  return rec;
}

DesignResult run_design(const ExperimentConfig& config, const DesignConfig& design,
                        const Corpus* corpus) {
  DesignResult dr;
  dr.name = design.name;
  dr.spec = design.spec.with_width(config.widths.base);
  const std::uint64_t design_seed = mix_seed(config.seed, fnv1a64(design.name));
  const auto inj = config.inject.find(design.name);

  HpGrid grid = config.grid;
  grid.base.base_width = static_cast<double>(config.widths.base);

  if (inj != config.inject.end() && !inj->second.grid.empty()) {
    dr.grid = grid_result_from_losses(grid, inj->second.grid);
    for (auto& pt : dr.grid.points) {
      pt.record.width = config.widths.base;
      pt.record.spec_hash = dr.spec.hash();
    }
  } else {
    if (!corpus) throw SpecError("design '" + design.name + "': no corpus and no injected grid");
    dr.grid = grid_search_train(dr.spec, grid, *corpus, config.train, design_seed,
                                config.data.seed, config.effective_workers());
  }
  dr.base_hp = dr.grid.best().hp;
  dr.base_hp.base_width = static_cast<double>(config.widths.base);

  // one (C, L) point per proxy width; the base width reuses the winning grid run
  struct ProxyPoint {
    std::int64_t width = 0;
    double loss = 0.0;
  };
  std::vector<ProxyPoint> points(config.widths.proxies.size());
  std::vector<std::int64_t> to_train;
  for (std::size_t i = 0; i < config.widths.proxies.size(); ++i) {
    const std::int64_t w = config.widths.proxies[i];
    points[i].width = w;
    if (inj != config.inject.end()) {
      const auto it = inj->second.proxy_loss.find(w);
      if (it != inj->second.proxy_loss.end()) {
        points[i].loss = it->second;
        const MuHyperparams hp_w =
            transfer(dr.base_hp, width_ratio(config.widths.base, w));
        dr.proxy_runs.push_back(injected_record(design.spec.with_width(w), hp_w, it->second,
                                                "proxy w=" + std::to_string(w)));
        continue;
      }
    }
    if (w == config.widths.base) {
      points[i].loss = dr.grid.best().final_loss;
      continue;  // the grid already trained this point
    }
    to_train.push_back(static_cast<std::int64_t>(i));
  }

  if (!to_train.empty()) {
    if (!corpus)
      throw SpecError("design '" + design.name + "': proxy widths lack injected losses");
    std::vector<RunRecord> trained(to_train.size());
    parallel_for_indexed(
        static_cast<std::int64_t>(to_train.size()), config.effective_workers(),
        [&](std::int64_t k) {
          const std::size_t i = static_cast<std::size_t>(to_train[static_cast<std::size_t>(k)]);
          const std::int64_t w = points[i].width;
          const MuHyperparams hp_w = transfer(dr.base_hp, width_ratio(config.widths.base, w));
          const ModelSpec spec_w = design.spec.with_width(w);
          BuiltModel model =
              BuiltModel::build(spec_w, hp_w, mix_seed(design_seed, static_cast<std::uint64_t>(w)));
          BatchStream stream(*corpus, config.train.batch_size, config.train.seq_len,
                             config.data.seed);
          RunRecord rec = train(model, stream, config.train,
                                mix_seed(design_seed, static_cast<std::uint64_t>(w)));
          rec.label = "proxy w=" + std::to_string(w);
          trained[static_cast<std::size_t>(k)] = std::move(rec);
        });
    for (std::size_t k = 0; k < to_train.size(); ++k) {
      const std::size_t i = static_cast<std::size_t>(to_train[k]);
      points[i].loss = trained[k].final_loss;
      dr.proxy_runs.push_back(std::move(trained[k]));
    }
  }

  std::vector<FitPoint> fit_points_noemb;
  for (const auto& pp : points) {
    if (!std::isfinite(pp.loss))
      throw NoBasinError("design '" + design.name + "': proxy width " +
                         std::to_string(pp.width) + " diverged");
    const ModelSpec spec_w = design.spec.with_width(pp.width);
    const double c_with =
        static_cast<double>(count_params(spec_w, true)) / config.fit.options.units;
    const double c_without =
        static_cast<double>(count_params(spec_w, false)) / config.fit.options.units;
    dr.fit_points.emplace_back(config.fit.include_embeddings ? c_with : c_without, pp.loss, 1.0,
                               std::to_string(pp.width));
    fit_points_noemb.emplace_back(c_without, pp.loss, 1.0, std::to_string(pp.width));
  }
  dr.fit = fit_power_law(dr.fit_points, config.fit.options);
  if (config.fit.ablate_embeddings && config.fit.include_embeddings)
    dr.fit_without_embeddings = fit_power_law(fit_points_noemb, config.fit.options);

  const ModelSpec target_spec = design.spec.with_width(config.widths.target);
  dr.target_count =
      static_cast<double>(count_params(target_spec, config.fit.include_embeddings)) /
      config.fit.options.units;
  dr.predicted = predict(dr.fit, dr.target_count);
  dr.target_hp = transfer(dr.base_hp, width_ratio(config.widths.base, config.widths.target));

  CostConfig cc;
  cc.layers = design.spec.n_layer;
  cc.seq_len = config.train.seq_len;
  cc.vocab = design.spec.vocab_size;
  cc.batch = config.train.batch_size;
  cc.grid_width = config.widths.base;
  cc.grid_trials = grid.size();
  for (auto w : config.widths.proxies)
    if (w != config.widths.base) cc.proxy_widths.push_back(w);
  cc.target_width = config.widths.target;
  cc.grid_steps = static_cast<double>(config.train.total_steps);
  cc.target_steps = static_cast<double>(config.train.total_steps);
  dr.cost = cost_ratio(cc);
  return dr;
}

}  // namespace

ParadigmResult run_paradigm(const ExperimentConfig& config) {
  config.validate();
  Corpus corpus;
  bool have_corpus = false;
  for (const auto& d : config.designs) {
    if (!fully_injected(config, d)) {
      corpus = config.load_data();
      have_corpus = true;
      break;
    }
  }

  ParadigmResult result;
  for (const auto& d : config.designs) {
    DesignResult dr;
    try {
      dr = run_design(config, d, have_corpus ? &corpus : nullptr);
    } catch (const std::exception& e) {
      dr.name = d.name;
      dr.spec = d.spec;
      dr.failed = true;
      dr.failure = e.what();
    }
    result.designs.push_back(std::move(dr));
  }

  for (std::int64_t i = 0; i < static_cast<std::int64_t>(result.designs.size()); ++i)
    if (!result.designs[static_cast<std::size_t>(i)].failed) result.ranking.push_back(i);
  std::stable_sort(result.ranking.begin(), result.ranking.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     const auto& da = result.designs[static_cast<std::size_t>(a)];
                     const auto& db = result.designs[static_cast<std::size_t>(b)];
                     if (da.predicted.loss != db.predicted.loss)
                       return da.predicted.loss < db.predicted.loss;
                     return da.name < db.name;
                   });
  if (!result.ranking.empty()) result.winner = result.ranking.front();
  return result;
}

RunRecord train_target(const ExperimentConfig& config, const std::string& design_name) {
  config.validate();
  const DesignConfig* design = nullptr;
  for (const auto& d : config.designs)
    if (d.name == design_name) design = &d;
  if (!design) throw SpecError("train_target: unknown design '" + design_name + "'");

  const Corpus corpus = config.load_data();
  MuHyperparams base_hp;
  if (config.explicit_hp) {
    base_hp = *config.explicit_hp;
  } else {
    const std::uint64_t design_seed = mix_seed(config.seed, fnv1a64(design->name));
    const auto inj = config.inject.find(design->name);
    HpGrid grid = config.grid;
    GridResult gres;
    if (inj != config.inject.end() && !inj->second.grid.empty())
      gres = grid_result_from_losses(grid, inj->second.grid);
    else
      gres = grid_search_train(design->spec.with_width(config.widths.base), grid, corpus,
                               config.train, design_seed, config.data.seed,
                               config.effective_workers());
    base_hp = gres.best().hp;
  }
  base_hp.base_width = static_cast<double>(config.widths.base);

  const MuHyperparams hp_t = transfer(base_hp, width_ratio(config.widths.base, config.widths.target));
  const ModelSpec target_spec = design->spec.with_width(config.widths.target);
  const std::uint64_t seed =
      mix_seed(mix_seed(config.seed, fnv1a64(design->name)),
               static_cast<std::uint64_t>(config.widths.target));
  BuiltModel model = BuiltModel::build(target_spec, hp_t, seed);
  BatchStream stream(corpus, config.train.batch_size, config.train.seq_len, config.data.seed);
  RunRecord rec = train(model, stream, config.train, seed);
  rec.label = design->name + "/target w=" + std::to_string(config.widths.target);
  return rec;
}

// ---------------------------------------------------------------------------
// coordinate check

namespace {

double rms(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s / static_cast<double>(t.numel()));
}

}  // namespace

CoordCheckTable coord_check(const ModelSpec& spec_template,
                            const std::vector<std::int64_t>& widths, const MuHyperparams& hp0,
                            std::int64_t base_width, std::int64_t steps, bool transfer_hp,
                            const Corpus& corpus, std::int64_t batch_size, std::int64_t seq_len,
                            std::uint64_t seed) {
  if (widths.size() < 2) throw SpecError("coord_check needs at least 2 widths");
  if (steps < 1 || steps > 20) throw SpecError("coord_check steps must be in [1, 20]");

  CoordCheckTable table;
  table.widths = widths;
  table.hidden_rms.assign(static_cast<std::size_t>(steps),
                          std::vector<double>(widths.size(), 0.0));
  table.logits_rms.assign(static_cast<std::size_t>(steps),
                          std::vector<double>(widths.size(), 0.0));
  table.diverged.assign(widths.size(), false);

  TrainConfig mini;
  mini.total_steps = steps;
  mini.warmup_steps = 0;
  mini.batch_size = batch_size;
  mini.seq_len = seq_len;

  for (std::size_t wi = 0; wi < widths.size(); ++wi) {
    const std::int64_t w = widths[wi];
    const MuHyperparams hp =
        transfer_hp ? transfer(hp0, width_ratio(base_width, w)) : hp0;
    BuiltModel model = BuiltModel::build(spec_template.with_width(w), hp,
                                         mix_seed(seed, static_cast<std::uint64_t>(w)));
    BatchStream stream(corpus, batch_size, seq_len, seed);
    AdamW opt(model, mini);
    std::vector<Tensor> grads;
    for (std::int64_t step = 0; step < steps; ++step) {
      Batch batch = stream.next();
      try {
        BuiltModel::StepGraph sg = model.forward(batch);
        table.hidden_rms[static_cast<std::size_t>(step)][wi] =
            rms(sg.graph.value(sg.block_outputs.back()));
        table.logits_rms[static_cast<std::size_t>(step)][wi] =
            rms(sg.graph.value(sg.logits));
        sg.graph.backward(sg.loss);
        grads.clear();
        for (NodeId id : sg.param_ids) grads.push_back(sg.graph.grad(id));
        clip_global_norm(grads, mini.grad_clip);
        // constant per-class lrs: the schedule is not part of this diagnostic
        opt.step(model, grads, hp.lr_matrix, hp.lr_other);
      } catch (const DivergenceSignal&) {
        table.diverged[wi] = true;
        break;
      }
    }
  }

  table.hidden_ratio.resize(static_cast<std::size_t>(steps), 0.0);
  for (std::int64_t step = 0; step < steps; ++step) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t wi = 0; wi < widths.size(); ++wi) {
      if (table.diverged[wi]) continue;
      const double v = table.hidden_rms[static_cast<std::size_t>(step)][wi];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    table.hidden_ratio[static_cast<std::size_t>(step)] = lo > 0.0 ? hi / lo : 0.0;
  }
  return table;
}

std::string CoordCheckTable::csv() const {
  std::ostringstream os;
  os << "step,width,hidden_rms,logits_rms\n";
  for (std::size_t step = 0; step < hidden_rms.size(); ++step)
    for (std::size_t wi = 0; wi < widths.size(); ++wi)
      os << step << ',' << widths[wi] << ',' << hidden_rms[step][wi] << ','
         << logits_rms[step][wi] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// report emission

namespace {

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

ojson fit_json(const PowerLawFit& fit) { return ojson::parse(fit.to_json()); }

}  // namespace

void emit_report(const ParadigmResult& result, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create report dir " + dir.string() + ": " + ec.message());
  {
    const fs::path probe = dir / ".write_probe";
    std::ofstream p(probe);
    if (!p) throw FormatError("report dir " + dir.string() + " is not writable");
    p.close();
    fs::remove(probe, ec);
  }
  fs::create_directories(dir / "traces");

  std::ofstream runs(dir / "runs.jsonl");
  auto emit_run = [&](const std::string& design, const RunRecord& rec) {
    RunRecord labeled = rec;
    labeled.label = design + "/" + rec.label;
    runs << labeled.to_json_line() << "\n";
    if (!labeled.trace.empty())
      write_trace_csv(labeled, dir / "traces" / (sanitize(labeled.label) + ".csv"));
  };
  for (const auto& dr : result.designs) {
    for (const auto& pt : dr.grid.points) emit_run(dr.name, pt.record);
    for (const auto& rec : dr.proxy_runs) emit_run(dr.name, rec);
  }
  runs.close();

  ojson fits;
  for (const auto& dr : result.designs) {
    if (dr.failed) {
      fits[dr.name] = ojson{{"failed", true}, {"failure", dr.failure}};
      continue;
    }
    ojson fj;
    fj["fit"] = fit_json(dr.fit);
    if (dr.fit_without_embeddings)
      fj["fit_without_embeddings"] = fit_json(*dr.fit_without_embeddings);
    fj["target_count"] = dr.target_count;
    fj["predicted_loss"] = dr.predicted.loss;
    fj["predicted_sigma"] = dr.predicted.sigma;
    fj["base_hp"] = hp_to_json(dr.base_hp);
    fj["target_hp"] = hp_to_json(dr.target_hp);
    fits[dr.name] = std::move(fj);
  }
  std::ofstream(dir / "fits.json") << fits.dump(2) << "\n";

  std::ofstream summary(dir / "summary.csv");
  summary << "design,predicted_loss,sigma,cost_ratio,rank,failed\n";
  auto rank_of = [&](std::int64_t i) -> std::string {
    for (std::size_t r = 0; r < result.ranking.size(); ++r)
      if (result.ranking[r] == i) return std::to_string(r + 1);
    return "";
  };
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(result.designs.size()); ++i) {
    const auto& dr = result.designs[static_cast<std::size_t>(i)];
    if (dr.failed) {
      summary << dr.name << ",,,,," << "true\n";
      continue;
    }
    summary << dr.name << ',' << dr.predicted.loss << ',' << dr.predicted.sigma << ','
            << static_cast<double>(dr.cost.ratio) << ',' << rank_of(i) << ",false\n";
  }
  summary.close();

  for (const auto& dr : result.designs) {
    if (dr.failed) continue;
    std::ofstream plot(dir / ("plot_" + sanitize(dr.name) + ".csv"));
    plot << "count,loss,kind\n";
    for (const auto& pt : dr.fit_points) plot << pt.count << ',' << pt.loss << ",proxy\n";
    plot << dr.target_count << ',' << dr.predicted.loss << ",predicted\n";
  }
}

}  // namespace muscale
