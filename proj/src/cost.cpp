#include "muscale/cost.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace muscale {

void CostConfig::validate() const {
  if (layers <= 0 || seq_len <= 0 || vocab <= 0 || batch <= 0)
    throw SpecError("cost config: layers/seq_len/vocab/batch must be positive");
  if (grid_width <= 0 || target_width <= 0)
    throw SpecError("cost config: grid and target widths must be positive");
  if (grid_trials < 0) throw SpecError("cost config: grid_trials must be >= 0");
  for (auto w : proxy_widths) {
    if (w <= 0) throw SpecError("cost config: proxy widths must be positive");
    if (w > target_width)
      throw SpecError("cost config: proxy width " + std::to_string(w) +
                      " must not exceed target width " + std::to_string(target_width));
  }
  if (!proxy_steps.empty() && proxy_steps.size() != proxy_widths.size())
    throw SpecError("cost config: proxy_steps must match proxy_widths");
  if (grid_steps <= 0 || target_steps <= 0)
    throw SpecError("cost config: step counts must be positive");
}

long double flops_per_step(std::int64_t layers, std::int64_t width, std::int64_t seq_len,
                           std::int64_t vocab, std::int64_t batch) {
  if (layers <= 0 || width <= 0 || seq_len <= 0 || vocab <= 0 || batch <= 0)
    throw SpecError("flops_per_step arguments must be positive");
  const long double l = static_cast<long double>(layers);
  const long double w = static_cast<long double>(width);
  const long double s = static_cast<long double>(seq_len);
  const long double V = static_cast<long double>(vocab);
  const long double B = static_cast<long double>(batch);
  const long double bracket = 1.0L + s / (6.0L * w) + V / (16.0L * l * w);
  return 96.0L * B * s * l * w * w * bracket;
}

namespace {

// The two published nanoLM configurations; the reported ratios are not
// reproducible from the stated widths with equal steps and t=8, so reports
// for these configs carry an explanatory note instead of tuned knobs.
struct KnownConfig {
  std::int64_t layers, seq_len, vocab, batch;
  const char* reported;
  const char* computed;
};

const KnownConfig kKnownConfigs[] = {
    {32, 512, 100256, 512, "0.131", "0.149"},
    {64, 2048, 100256, 512, "0.142", "0.165"},
};

}  // namespace

CostReport cost_ratio(const CostConfig& config) {
  config.validate();
  CostReport rep;

  const long double grid_per_step =
      flops_per_step(config.layers, config.grid_width, config.seq_len, config.vocab, config.batch);
  for (std::int64_t t = 0; t < config.grid_trials; ++t) {
    rep.grid_items.push_back({"grid trial " + std::to_string(t + 1), config.grid_width,
                              config.grid_steps, grid_per_step * config.grid_steps});
    rep.grid_total += rep.grid_items.back().flops;
  }

  for (std::size_t i = 0; i < config.proxy_widths.size(); ++i) {
    const double steps = config.proxy_steps.empty() ? config.grid_steps : config.proxy_steps[i];
    const long double f = flops_per_step(config.layers, config.proxy_widths[i], config.seq_len,
                                         config.vocab, config.batch) *
                          static_cast<long double>(steps);
    rep.proxy_items.push_back(
        {"proxy w=" + std::to_string(config.proxy_widths[i]), config.proxy_widths[i], steps, f});
    rep.proxy_total += f;
  }

  const long double target_per_step = flops_per_step(config.layers, config.target_width,
                                                     config.seq_len, config.vocab, config.batch);
  rep.target_item = {"target w=" + std::to_string(config.target_width), config.target_width,
                     config.target_steps, target_per_step * config.target_steps};

  rep.pipeline_total = rep.grid_total + rep.proxy_total;
  rep.ratio = rep.pipeline_total / rep.target_item.flops;

  for (const auto& kc : kKnownConfigs) {
    if (config.layers == kc.layers && config.seq_len == kc.seq_len && config.vocab == kc.vocab &&
        config.batch == kc.batch && config.grid_width == 256 && config.target_width == 8192) {
      rep.notes.push_back(std::string("reported nanoLM cost ratio for this configuration is ") +
                          kc.reported + "; the equal-steps t=8 itemization computes " + "≈" +
                          kc.computed + " (" + kc.reported + " vs ≈" + kc.computed +
                          "). The published value is not reproducible from the stated widths " +
                          "and trial count alone; per-run step allocation is unstated, so every " +
                          "term is itemized above instead of tuning hidden knobs to match.");
    }
  }
  return rep;
}

namespace {

std::string fmt_flops(long double f) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6Le", f);
  return buf;
}

}  // namespace

std::string CostReport::table() const {
  std::ostringstream os;
  os << "item                     width      steps            FLOPs\n";
  auto row = [&os](const CostItem& it) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-22s %7lld %10.0f %16.6Le\n", it.label.c_str(),
                  static_cast<long long>(it.width), it.steps, it.flops);
    os << buf;
  };
  for (const auto& it : grid_items) row(it);
  for (const auto& it : proxy_items) row(it);
  row(target_item);
  os << "grid total     " << fmt_flops(grid_total) << "\n";
  os << "proxy total    " << fmt_flops(proxy_total) << "\n";
  os << "pipeline total " << fmt_flops(pipeline_total) << "\n";
  os << "target total   " << fmt_flops(target_item.flops) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6Lf", ratio);
  os << "ratio          " << buf << "\n";
  for (const auto& n : notes) os << "note: " << n << "\n";
  return os.str();
}

std::string CostReport::to_json() const {
  using json = nlohmann::ordered_json;
  auto item = [](const CostItem& it) {
    return json{{"label", it.label},
                {"width", it.width},
                {"steps", it.steps},
                {"flops", static_cast<double>(it.flops)}};
  };
  json j;
  j["grid"] = json::array();
  for (const auto& it : grid_items) j["grid"].push_back(item(it));
  j["proxies"] = json::array();
  for (const auto& it : proxy_items) j["proxies"].push_back(item(it));
  j["target"] = item(target_item);
  j["grid_total"] = static_cast<double>(grid_total);
  j["proxy_total"] = static_cast<double>(proxy_total);
  j["pipeline_total"] = static_cast<double>(pipeline_total);
  j["ratio"] = static_cast<double>(ratio);
  j["notes"] = notes;
  return j.dump(2);
}

}  // namespace muscale
