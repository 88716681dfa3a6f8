#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "muscale/errors.hpp"

namespace muscale {

/// One (parameter count, loss) observation. C is expressed in the fit's
/// configured units (1e9 parameters by default).
struct FitPoint {
  double count = 0.0;
  double loss = 0.0;
  double weight = 1.0;
  std::string tag;  // width or run label, carried through to reports

  FitPoint() = default;
  FitPoint(double c, double l, double w = 1.0, std::string t = {})
      : count(c), loss(l), weight(w), tag(std::move(t)) {}
};

struct FitOptions {
  std::vector<double> b_starts = {-0.25, -0.5, -1.0};
  int max_iterations = 200;
  double step_tolerance = 1e-12;  // relative step size below which we stop
  double units = 1e9;             // parameter count per unit of C
};

/// The fitted law L(C) = a*C^b + c with its uncertainty and diagnostics.
struct PowerLawFit {
  double a = 0.0, b = 0.0, c = 0.0;
  std::array<std::array<double, 3>, 3> covariance{};  // s^2 (J^T J)^-1
  std::vector<double> residuals;                      // model - observed, per point
  double units = 1e9;
  // convergence report
  int iterations = 0;
  double gradient_norm = 0.0;  // ||J^T r|| at the solution
  double ssr = 0.0;            // weighted sum of squared residuals
  bool converged = false;

  double residual_norm() const;
  std::string to_json() const;
  static PowerLawFit from_json(const std::string& text);
};

struct Prediction {
  double loss = 0.0;
  double sigma = 0.0;  // 1-sigma band propagated from the coefficient covariance
};

/// Weighted nonlinear least squares for L(C) = a*C^b + c via damped
/// Gauss-Newton (Levenberg-Marquardt) with the analytic Jacobian
/// [C^b, a*C^b*ln C, 1], multi-started over b and keeping the best optimum.
/// Throws FitError on fewer than 4 points, fewer than 3 distinct C values,
/// or when no start produces a usable optimum.
PowerLawFit fit_power_law(const std::vector<FitPoint>& points, const FitOptions& options = {});

Prediction predict(const PowerLawFit& fit, double count);

/// One run measured under both parameter-counting conventions.
struct AblationPoint {
  double count_with = 0.0;     // embeddings included
  double count_without = 0.0;  // embeddings excluded
  double loss = 0.0;
  double weight = 1.0;
  std::string tag;
};

struct EmbeddingAblation {
  PowerLawFit with_embeddings;
  PowerLawFit without_embeddings;
};

/// Fits the same losses against both counting conventions so their residual
/// norms can be compared (the embedding-ablation mode).
EmbeddingAblation fit_with_and_without_embeddings(const std::vector<AblationPoint>& points,
                                                  const FitOptions& options = {});

}  // namespace muscale
