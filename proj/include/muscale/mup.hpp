#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "muscale/errors.hpp"

namespace muscale {

/// Exact positive rational width ratio r = target_width / base_width.
/// Kept rational so chained transfers compose without drift.
struct WidthRatio {
  std::int64_t num = 1;
  std::int64_t den = 1;

  WidthRatio() = default;
  WidthRatio(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (n <= 0 || d <= 0) throw SpecError("width ratio must be positive");
    const std::int64_t g = std::gcd(n, d);
    num = n / g;
    den = d / g;
  }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  WidthRatio inverse() const { return {den, num}; }

  friend WidthRatio operator*(const WidthRatio& a, const WidthRatio& b) {
    // reduce cross-wise first to keep intermediates small
    const std::int64_t g1 = std::gcd(a.num, b.den);
    const std::int64_t g2 = std::gcd(b.num, a.den);
    return {(a.num / g1) * (b.num / g2), (a.den / g2) * (b.den / g1)};
  }
  friend bool operator==(const WidthRatio& a, const WidthRatio& b) {
    return a.num == b.num && a.den == b.den;
  }
};

inline WidthRatio width_ratio(std::int64_t base_w, std::int64_t target_w) {
  if (base_w <= 0 || target_w <= 0) throw SpecError("widths must be positive");
  return {target_w, base_w};
}

/// How the `init_*` fields are to be read. The transfer rule always divides the
/// matrix-class *variance* by r, so under `stddev` the stored value maps to
/// value/sqrt(r). Default follows the transfer table's "initialization variance"
/// wording; `stddev` matches configs that quote an "initialization std".
enum class InitScale { variance, stddev };

/// The width-transferable hyperparameters: per-class learning rates,
/// init scales, and multipliers, plus the width they are currently tuned for.
struct MuHyperparams {
  double lr_matrix = 1e-3;    // AdamW lr for tensors whose two dims both grow with width
  double lr_other = 1e-3;     // AdamW lr for everything else (embeddings, norms, output head)
  double init_matrix = 0.02;  // init scale, matrix-like class
  double init_other = 0.02;   // init scale, all other classes
  double mult_output = 1.0;   // multiplier on the word-decoding logits
  double mult_other = 1.0;    // multiplier on other activations (applied to embeddings)
  InitScale init_scale = InitScale::variance;
  double base_width = 0.0;  // width these values are tuned at (0 = unspecified)

  /// Variance actually handed to the sampler for each class.
  double variance_matrix() const {
    return init_scale == InitScale::variance ? init_matrix : init_matrix * init_matrix;
  }
  double variance_other() const {
    return init_scale == InitScale::variance ? init_other : init_other * init_other;
  }

  void validate() const {
    if (lr_matrix <= 0 || lr_other <= 0) throw SpecError("learning rates must be > 0");
    if (init_matrix <= 0 || init_other <= 0) throw SpecError("init scales must be > 0");
    if (mult_output < 0 || mult_other < 0) throw SpecError("multipliers must be >= 0");
  }
};

/// Map base-width hyperparameters to a width r times larger:
/// matrix-class lr and init variance scale by 1/r, the output multiplier
/// scales by 1/r, and every "others" field is untouched.
inline MuHyperparams transfer(const MuHyperparams& base, const WidthRatio& r) {
  MuHyperparams out = base;
  const double rv = r.value();
  out.lr_matrix = base.lr_matrix / rv;
  if (base.init_scale == InitScale::variance) {
    out.init_matrix = base.init_matrix / rv;
  } else {
    out.init_matrix = base.init_matrix / std::sqrt(rv);
  }
  out.mult_output = base.mult_output / rv;
  out.base_width = base.base_width * rv;
  return out;
}

}  // namespace muscale
