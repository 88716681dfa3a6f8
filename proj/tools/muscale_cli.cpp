// muscale: train narrow μP proxies, fit L = a*C^b + c, and predict the loss
// of wide models without training them.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "muscale/pipeline.hpp"

namespace {

using namespace muscale;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFit = 3;
constexpr int kExitDivergence = 4;

ExperimentConfig load_config(const std::string& path) {
  return ExperimentConfig::from_json_file(path);
}

std::vector<const DesignConfig*> select_designs(const ExperimentConfig& cfg,
                                                const std::string& name) {
  std::vector<const DesignConfig*> out;
  for (const auto& d : cfg.designs)
    if (name.empty() || d.name == name) out.push_back(&d);
  if (out.empty()) throw SpecError("no design named '" + name + "' in the config");
  return out;
}

void write_grid_csv(const GridResult& result, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "lr,init,mult_output,loss,diverged,best\n";
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& pt = result.points[i];
    out << pt.hp.lr_matrix << ',' << pt.hp.init_matrix << ',' << pt.hp.mult_output << ','
        << pt.final_loss << ',' << (pt.diverged ? "true" : "false") << ','
        << (static_cast<std::int64_t>(i) == result.best_index ? "true" : "false") << '\n';
  }
}

GridResult run_grid_for(const ExperimentConfig& cfg, const DesignConfig& design,
                        const Corpus* corpus) {
  const auto inj = cfg.inject.find(design.name);
  if (inj != cfg.inject.end() && !inj->second.grid.empty())
    return grid_result_from_losses(cfg.grid, inj->second.grid);
  if (!corpus) throw SpecError("design '" + design.name + "' has no injected grid losses");
  return grid_search_train(design.spec.with_width(cfg.widths.base), cfg.grid, *corpus, cfg.train,
                           mix_seed(cfg.seed, fnv1a64(design.name)), cfg.data.seed,
                           cfg.effective_workers());
}

int cmd_grid(const std::string& config_path, const std::string& design_name) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  Corpus corpus;
  bool have_corpus = false;
  fs::create_directories(cfg.out_dir);
  for (const DesignConfig* d : select_designs(cfg, design_name)) {
    const auto inj = cfg.inject.find(d->name);
    if ((inj == cfg.inject.end() || inj->second.grid.empty()) && !have_corpus) {
      corpus = cfg.load_data();
      have_corpus = true;
    }
    GridResult res = run_grid_for(cfg, *d, have_corpus ? &corpus : nullptr);
    const fs::path csv = fs::path(cfg.out_dir) / ("grid_" + d->name + ".csv");
    write_grid_csv(res, csv);
    const auto& best = res.best();
    std::printf("%s: best lr %g (loss %.6g) over %zu points -> %s\n", d->name.c_str(),
                best.hp.lr_matrix, best.final_loss, res.points.size(), csv.string().c_str());
    const auto basin = basin_members(res, cfg.basin_tolerance);
    std::printf("%s: basin (tolerance %g): %zu point(s)\n", d->name.c_str(), cfg.basin_tolerance,
                basin.size());
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& design_name) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  const Corpus corpus = cfg.load_data();
  fs::create_directories(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "traces");
  std::ofstream runs(fs::path(cfg.out_dir) / "runs.jsonl");

  for (const DesignConfig* d : select_designs(cfg, design_name)) {
    MuHyperparams base_hp;
    if (cfg.explicit_hp) {
      base_hp = *cfg.explicit_hp;
    } else {
      GridResult res = run_grid_for(cfg, *d, &corpus);
      base_hp = res.best().hp;
      for (const auto& pt : res.points) {
        RunRecord rec = pt.record;
        rec.label = d->name + "/" + rec.label;
        runs << rec.to_json_line() << "\n";
      }
    }
    base_hp.base_width = static_cast<double>(cfg.widths.base);
    const std::uint64_t design_seed = mix_seed(cfg.seed, fnv1a64(d->name));
    for (auto w : cfg.widths.proxies) {
      const MuHyperparams hp_w = transfer(base_hp, width_ratio(cfg.widths.base, w));
      BuiltModel model =
          BuiltModel::build(d->spec.with_width(w), hp_w, mix_seed(design_seed, static_cast<std::uint64_t>(w)));
      BatchStream stream(corpus, cfg.train.batch_size, cfg.train.seq_len, cfg.data.seed);
      RunRecord rec = train(model, stream, cfg.train, mix_seed(design_seed, static_cast<std::uint64_t>(w)));
      rec.label = d->name + "/proxy w=" + std::to_string(w);
      runs << rec.to_json_line() << "\n";
      write_trace_csv(rec, fs::path(cfg.out_dir) / "traces" /
                               (d->name + "_w" + std::to_string(w) + ".csv"));
      std::printf("%s w=%lld: final loss %.6g%s\n", d->name.c_str(), static_cast<long long>(w),
                  rec.final_loss, rec.diverged ? " (diverged)" : "");
    }
  }
  return kExitOk;
}

std::vector<FitPoint> read_points_csv(const std::string& path, double units) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open points file " + path);
  std::vector<FitPoint> pts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double c, l, w = 1.0;
    if (!(ss >> c >> l)) continue;  // header or malformed line
    ss >> w;
    pts.emplace_back(c / units, l, w);
  }
  if (pts.empty()) throw FormatError("no usable (params, loss) rows in " + path);
  return pts;
}

int cmd_fit(const std::string& points_path, double units, const std::string& out_path) {
  FitOptions opt;
  opt.units = units;
  const PowerLawFit fit = fit_power_law(read_points_csv(points_path, units), opt);
  const std::string text = fit.to_json();
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream(out_path) << text << "\n";
    std::printf("fit: a=%.6g b=%.6g c=%.6g (units %.3g params) -> %s\n", fit.a, fit.b, fit.c,
                fit.units, out_path.c_str());
  }
  return kExitOk;
}

int cmd_predict(const std::string& fit_path, double count, double params) {
  std::ifstream in(fit_path);
  if (!in) throw FormatError("cannot open fit file " + fit_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const PowerLawFit fit = PowerLawFit::from_json(ss.str());
  if (params > 0) count = params / fit.units;
  if (!(count > 0)) throw SpecError("predict: pass --count (fit units) or --params (raw)");
  const Prediction p = predict(fit, count);
  std::printf("C=%.6g (x%.3g params): predicted loss %.6f +- %.6f\n", count, fit.units, p.loss,
              p.sigma);
  return kExitOk;
}

int cmd_cost(const std::string& config_path, const std::string& design_name, bool as_json) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  for (const DesignConfig* d : select_designs(cfg, design_name)) {
    CostConfig cc;
    cc.layers = d->spec.n_layer;
    cc.seq_len = cfg.train.seq_len;
    cc.vocab = d->spec.vocab_size;
    cc.batch = cfg.train.batch_size;
    cc.grid_width = cfg.widths.base;
    cc.grid_trials = cfg.grid.size();
    for (auto w : cfg.widths.proxies)
      if (w != cfg.widths.base) cc.proxy_widths.push_back(w);
    cc.target_width = cfg.widths.target;
    cc.grid_steps = static_cast<double>(cfg.train.total_steps);
    cc.target_steps = static_cast<double>(cfg.train.total_steps);
    const CostReport rep = cost_ratio(cc);
    if (as_json) {
      std::cout << rep.to_json() << "\n";
    } else {
      std::printf("== %s\n%s", d->name.c_str(), rep.table().c_str());
    }
  }
  return kExitOk;
}

int cmd_coordcheck(const std::string& config_path, const std::string& design_name,
                   std::vector<std::int64_t> widths, std::int64_t steps, bool no_mup,
                   const std::string& out_path) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  const DesignConfig* d = select_designs(cfg, design_name).front();
  if (widths.empty()) widths = cfg.widths.proxies;
  const Corpus corpus = cfg.load_data();
  MuHyperparams hp0 = cfg.explicit_hp ? *cfg.explicit_hp : cfg.grid.point(0);
  hp0.base_width = static_cast<double>(cfg.widths.base);
  const CoordCheckTable table =
      coord_check(d->spec, widths, hp0, cfg.widths.base, steps, !no_mup, corpus,
                  cfg.train.batch_size, cfg.train.seq_len, cfg.data.seed);
  const std::string csv = table.csv();
  if (!out_path.empty()) std::ofstream(out_path) << csv;
  std::cout << csv;
  for (std::size_t s = 0; s < table.hidden_ratio.size(); ++s)
    std::printf("step %zu: hidden RMS max/min ratio %.4f\n", s, table.hidden_ratio[s]);
  return kExitOk;
}

int paradigm_exit_code(const ParadigmResult& result) {
  if (result.designs.empty()) return kExitOk;
  if (!result.ranking.empty()) return kExitOk;
  bool all_divergence = true;
  bool any_fit = false;
  for (const auto& dr : result.designs) {
    if (!dr.failed) continue;
    const bool divergent = dr.failure.find("basin") != std::string::npos ||
                           dr.failure.find("diverg") != std::string::npos;
    if (!divergent) all_divergence = false;
    if (dr.failure.find("fit") != std::string::npos) any_fit = true;
  }
  if (all_divergence) return kExitDivergence;
  return any_fit ? kExitFit : kExitConfig;
}

int cmd_paradigm(const std::string& config_path) {
  ExperimentConfig cfg = load_config(config_path);
  const ParadigmResult result = run_paradigm(cfg);
  emit_report(result, cfg.out_dir);
  for (const auto& dr : result.designs) {
    if (dr.failed) {
      std::printf("%-20s FAILED: %s\n", dr.name.c_str(), dr.failure.c_str());
    } else {
      std::printf("%-20s predicted loss at w=%lld: %.4f +- %.4f (cost ratio %.4f)\n",
                  dr.name.c_str(), static_cast<long long>(cfg.widths.target), dr.predicted.loss,
                  dr.predicted.sigma, static_cast<double>(dr.cost.ratio));
    }
  }
  if (result.winner >= 0)
    std::printf("winner: %s\n",
                result.designs[static_cast<std::size_t>(result.winner)].name.c_str());
  std::printf("report written to %s\n", cfg.out_dir.c_str());
  return paradigm_exit_code(result);
}

int cmd_train_target(const std::string& config_path, const std::string& design_name) {
  ExperimentConfig cfg = load_config(config_path);
  const RunRecord rec = train_target(cfg, design_name);
  fs::create_directories(cfg.out_dir);
  fs::create_directories(fs::path(cfg.out_dir) / "traces");
  std::ofstream runs(fs::path(cfg.out_dir) / "runs.jsonl", std::ios::app);
  runs << rec.to_json_line() << "\n";
  write_trace_csv(rec, fs::path(cfg.out_dir) / "traces" /
                           (design_name + "_target_w" + std::to_string(rec.width) + ".csv"));
  std::printf("%s: target loss %.6g%s\n", design_name.c_str(), rec.final_loss,
              rec.diverged ? " (diverged)" : "");
  return rec.diverged ? kExitDivergence : kExitOk;
}

int cmd_report(const std::string& config_path, const std::string& manifest_dir) {
  ExperimentConfig cfg = load_config(config_path);
  cfg.validate();
  const fs::path dir = manifest_dir.empty() ? fs::path(cfg.out_dir) : fs::path(manifest_dir);
  std::ifstream runs(dir / "runs.jsonl");
  if (!runs) throw FormatError("no manifest at " + (dir / "runs.jsonl").string());

  // Replay the manifest through the paradigm as injected losses.
  cfg.inject.clear();
  std::string line;
  while (std::getline(runs, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const std::string label = j.at("label").get<std::string>();
    const auto slash = label.find('/');
    if (slash == std::string::npos) continue;
    const std::string design = label.substr(0, slash);
    const std::string kind = label.substr(slash + 1);
    const double loss = j.at("final_loss").is_number()
                            ? j.at("final_loss").get<double>()
                            : std::numeric_limits<double>::infinity();
    auto& inj = cfg.inject[design];
    if (kind.rfind("grid[", 0) == 0) {
      const std::size_t idx = std::stoul(kind.substr(5));
      if (inj.grid.size() <= idx) inj.grid.resize(idx + 1, std::numeric_limits<double>::infinity());
      inj.grid[idx] = loss;
    } else if (kind.rfind("proxy w=", 0) == 0) {
      inj.proxy_loss[std::stoll(kind.substr(8))] = loss;
    }
  }
  // widths trained inside the grid have no separate proxy line
  for (auto& [design, inj] : cfg.inject) {
    if (!inj.grid.empty() && inj.proxy_loss.find(cfg.widths.base) == inj.proxy_loss.end()) {
      GridResult replay = grid_result_from_losses(cfg.grid, inj.grid);
      inj.proxy_loss[cfg.widths.base] = replay.best().final_loss;
    }
  }
  const ParadigmResult result = run_paradigm(cfg);
  emit_report(result, dir);
  std::printf("report regenerated in %s\n", dir.string().c_str());
  return paradigm_exit_code(result);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muscale: loss prediction for wide transformers from narrow μP proxies"};
  app.require_subcommand(1);

  std::string config_path, design_name, points_path, fit_path, out_path, manifest_dir;
  double units = 1e9, count = 0.0, params = 0.0;
  bool as_json = false, no_mup = false;
  std::vector<std::int64_t> widths;
  std::int64_t steps = 10;

  auto* grid = app.add_subcommand("grid", "grid-search μTransferable HPs at the base width");
  grid->add_option("--config", config_path, "experiment config (JSON)")->required();
  grid->add_option("--design", design_name, "restrict to one design");

  auto* sweep = app.add_subcommand("sweep", "train the proxy-width ladder with transferred HPs");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--design", design_name);

  auto* fit = app.add_subcommand("fit", "fit L = a*C^b + c to a (params, loss[, weight]) CSV");
  fit->add_option("--points", points_path, "CSV of raw parameter counts and losses")->required();
  fit->add_option("--units", units, "parameter count per unit of C (default 1e9)");
  fit->add_option("--out", out_path, "write the fit JSON here instead of stdout");

  auto* predict = app.add_subcommand("predict", "evaluate a stored fit at a parameter count");
  predict->add_option("--fit", fit_path, "fit JSON from `muscale fit`")->required();
  predict->add_option("--count", count, "parameter count in fit units");
  predict->add_option("--params", params, "raw parameter count");

  auto* cost = app.add_subcommand("cost", "FLOPs itemization and pipeline/target cost ratio");
  cost->add_option("--config", config_path)->required();
  cost->add_option("--design", design_name);
  cost->add_flag("--json", as_json, "emit the report as JSON");

  auto* coord = app.add_subcommand("coordcheck", "activation-scale stability across widths");
  coord->add_option("--config", config_path)->required();
  coord->add_option("--design", design_name);
  coord->add_option("--widths", widths, "widths to compare (default: proxy widths)");
  coord->add_option("--steps", steps, "training steps to record (<= 20)");
  coord->add_flag("--no-mup", no_mup, "reuse base HPs unscaled (standard parametrization)");
  coord->add_option("--out", out_path, "also write the table CSV here");

  auto* paradigm = app.add_subcommand("paradigm", "full loop: grid, transfer, train, fit, rank");
  paradigm->add_option("--config", config_path)->required();

  auto* train_tgt = app.add_subcommand("train-target", "explicitly train the target-width model");
  train_tgt->add_option("--config", config_path)->required();
  train_tgt->add_option("--design", design_name)->required();

  auto* report = app.add_subcommand("report", "regenerate reports from a stored manifest");
  report->add_option("--config", config_path)->required();
  report->add_option("--dir", manifest_dir, "manifest directory (default: config out_dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (grid->parsed()) return cmd_grid(config_path, design_name);
    if (sweep->parsed()) return cmd_sweep(config_path, design_name);
    if (fit->parsed()) return cmd_fit(points_path, units, out_path);
    if (predict->parsed()) return cmd_predict(fit_path, count, params);
    if (cost->parsed()) return cmd_cost(config_path, design_name, as_json);
    if (coord->parsed())
      return cmd_coordcheck(config_path, design_name, widths, steps, no_mup, out_path);
    if (paradigm->parsed()) return cmd_paradigm(config_path);
    if (train_tgt->parsed()) return cmd_train_target(config_path, design_name);
    if (report->parsed()) return cmd_report(config_path, manifest_dir);
  } catch (const NoBasinError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const FitError& e) {
    std::fprintf(stderr, "fit error: %s\n", e.what());
    return kExitFit;
  } catch (const SpecError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
