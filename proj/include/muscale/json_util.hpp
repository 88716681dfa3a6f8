#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "muscale/mup.hpp"

namespace muscale {

/// JSON has no +inf/nan literals; divergent losses serialize as strings.
inline nlohmann::json json_finite(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double finite_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

inline nlohmann::ordered_json hp_to_json(const MuHyperparams& hp) {
  nlohmann::ordered_json j;
  j["lr_matrix"] = hp.lr_matrix;
  j["lr_other"] = hp.lr_other;
  j["init_matrix"] = hp.init_matrix;
  j["init_other"] = hp.init_other;
  j["mult_output"] = hp.mult_output;
  j["mult_other"] = hp.mult_other;
  j["init_scale"] = hp.init_scale == InitScale::variance ? "variance" : "stddev";
  j["base_width"] = hp.base_width;
  return j;
}

inline MuHyperparams hp_from_json(const nlohmann::json& j) {
  MuHyperparams hp;
  if (j.contains("lr_matrix")) hp.lr_matrix = j.at("lr_matrix").get<double>();
  if (j.contains("lr_other")) hp.lr_other = j.at("lr_other").get<double>();
  if (j.contains("init_matrix")) hp.init_matrix = j.at("init_matrix").get<double>();
  if (j.contains("init_other")) hp.init_other = j.at("init_other").get<double>();
  if (j.contains("mult_output")) hp.mult_output = j.at("mult_output").get<double>();
  if (j.contains("mult_other")) hp.mult_other = j.at("mult_other").get<double>();
  if (j.contains("init_scale")) {
    const std::string s = j.at("init_scale").get<std::string>();
    if (s == "variance")
      hp.init_scale = InitScale::variance;
    else if (s == "stddev")
      hp.init_scale = InitScale::stddev;
    else
      throw SpecError("init_scale must be 'variance' or 'stddev', got '" + s + "'");
  }
  if (j.contains("base_width")) hp.base_width = j.at("base_width").get<double>();
  return hp;
}

}  // namespace muscale
