#include "muscale/powerlaw.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

namespace muscale {

namespace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Objective {
  const std::vector<FitPoint>& pts;

  double ssr(const Vec3& p) const {
    double s = 0.0;
    for (const auto& pt : pts) {
      const double r = p[0] * std::pow(pt.count, p[1]) + p[2] - pt.loss;
      s += pt.weight * r * r;
    }
    return s;
  }

  // Weighted normal-equation pieces at p: JtJ, Jtr, and ssr.
  void linearize(const Vec3& p, Mat3& jtj, Vec3& jtr, double& s) const {
    jtj.setZero();
    jtr.setZero();
    s = 0.0;
    for (const auto& pt : pts) {
      const double cb = std::pow(pt.count, p[1]);
      const double r = p[0] * cb + p[2] - pt.loss;
      const Vec3 j(cb, p[0] * cb * std::log(pt.count), 1.0);
      jtj.noalias() += pt.weight * j * j.transpose();
      jtr.noalias() += pt.weight * r * j;
      s += pt.weight * r * r;
    }
  }
};

struct LocalOptimum {
  Vec3 p = Vec3::Zero();
  double ssr = std::numeric_limits<double>::infinity();
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

LocalOptimum minimize_from(const Objective& obj, Vec3 p0, const FitOptions& opt) {
  LocalOptimum out;
  Vec3 p = p0;
  double ssr = obj.ssr(p);
  if (!std::isfinite(ssr)) return out;

  Mat3 jtj;
  Vec3 jtr;
  double lambda = 1e-3;
  obj.linearize(p, jtj, jtr, ssr);
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    Mat3 damped = jtj;
    for (int k = 0; k < 3; ++k)
      damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
    const Vec3 delta = damped.ldlt().solve(-jtr);
    if (!delta.allFinite()) {
      lambda *= 4.0;
      if (lambda > 1e12) break;
      continue;
    }
    const Vec3 cand = p + delta;
    const double cand_ssr = obj.ssr(cand);
    const double rel_step = delta.norm() / (p.norm() + 1e-300);
    if (std::isfinite(cand_ssr) && cand_ssr <= ssr) {
      p = cand;
      ssr = cand_ssr;
      lambda = std::max(lambda * 0.3, 1e-12);
      obj.linearize(p, jtj, jtr, ssr);
      if (rel_step < opt.step_tolerance) {
        out.converged = true;
        ++it;
        break;
      }
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) {
        out.converged = true;  // no downhill step left at machine scale
        break;
      }
    }
  }
  // Polish with undamped Gauss-Newton: quadratic convergence near the optimum
  // pins the endpoint to machine precision, so refits of equivalent data land
  // on bit-near-identical coefficients.
  for (int k = 0; k < 40; ++k) {
    obj.linearize(p, jtj, jtr, ssr);
    const Vec3 delta = jtj.ldlt().solve(-jtr);
    if (!delta.allFinite()) break;
    const Vec3 cand = p + delta;
    const double cand_ssr = obj.ssr(cand);
    if (!std::isfinite(cand_ssr) || cand_ssr > ssr + 1e-12 * (1.0 + ssr)) break;
    p = cand;
    ++it;
    if (delta.norm() <= 1e-15 * (p.norm() + 1e-300)) break;
  }
  obj.linearize(p, jtj, jtr, ssr);

  out.p = p;
  out.ssr = ssr;
  out.iterations = it;
  out.gradient_norm = jtr.norm();
  return out;
}

}  // namespace

PowerLawFit fit_power_law(const std::vector<FitPoint>& points, const FitOptions& options) {
  if (points.size() < 4)
    throw FitError("fit_power_law needs at least 4 points, got " + std::to_string(points.size()));
  std::set<double> distinct;
  double min_loss = std::numeric_limits<double>::infinity();
  const FitPoint* smallest = nullptr;
  for (const auto& pt : points) {
    if (!(pt.count > 0.0)) throw FitError("fit point has non-positive parameter count");
    if (!std::isfinite(pt.loss)) throw FitError("fit point has non-finite loss");
    if (pt.weight < 0.0) throw FitError("fit point has negative weight");
    distinct.insert(pt.count);
    min_loss = std::min(min_loss, pt.loss);
    if (!smallest || pt.count < smallest->count) smallest = &pt;
  }
  if (distinct.size() < 3)
    throw FitError("fit_power_law needs at least 3 distinct parameter counts");

  // Solve against C normalized by its geometric mean: the problem becomes
  // scale-free, so rescaling every count leaves b, c, residuals, and
  // predictions unchanged by construction, and J^T J stays well conditioned.
  double log_mean = 0.0;
  for (const auto& pt : points) log_mean += std::log(pt.count);
  const double scale = std::exp(log_mean / static_cast<double>(points.size()));
  std::vector<FitPoint> scaled = points;
  for (auto& pt : scaled) pt.count /= scale;
  const FitPoint* smallest_scaled = &scaled[0];
  for (const auto& pt : scaled)
    if (pt.count < smallest_scaled->count) smallest_scaled = &pt;

  Objective obj{scaled};
  LocalOptimum best;
  const double c0 = min_loss - 0.01;
  for (double b0 : options.b_starts) {
    const double a0 = (smallest_scaled->loss - c0) / std::pow(smallest_scaled->count, b0);
    LocalOptimum cand = minimize_from(obj, Vec3(a0, b0, c0), options);
    if (cand.ssr < best.ssr) best = cand;
  }
  if (!std::isfinite(best.ssr))
    throw FitError("fit_power_law: no start produced a finite optimum");

  PowerLawFit fit;
  fit.b = best.p[1];
  fit.c = best.p[2];
  fit.a = best.p[0] * std::pow(scale, -fit.b);  // map back to the caller's units
  fit.units = options.units;
  fit.iterations = best.iterations;
  fit.gradient_norm = best.gradient_norm;
  fit.ssr = best.ssr;
  fit.converged = best.converged;
  for (const auto& pt : scaled)
    fit.residuals.push_back(best.p[0] * std::pow(pt.count, fit.b) + fit.c - pt.loss);

  Mat3 jtj;
  Vec3 jtr;
  double ssr;
  obj.linearize(best.p, jtj, jtr, ssr);
  Eigen::FullPivLU<Mat3> lu(jtj);
  if (!lu.isInvertible())
    throw FitError("fit_power_law: singular J^T J at the optimum (a=" + std::to_string(fit.a) +
                   ", b=" + std::to_string(fit.b) + ", c=" + std::to_string(fit.c) +
                   ", ssr=" + std::to_string(ssr) + "); points may be degenerate");
  const double dof = static_cast<double>(points.size()) - 3.0;
  const double s2 = dof > 0.0 ? ssr / dof : 0.0;
  Mat3 cov = s2 * lu.inverse();
  cov = 0.5 * (cov + cov.transpose()).eval();
  // push the covariance through (a', b, c) -> (a' * scale^-b, b, c)
  Mat3 jac = Mat3::Identity();
  jac(0, 0) = std::pow(scale, -fit.b);
  jac(0, 1) = -fit.a * std::log(scale);
  cov = (jac * cov * jac.transpose()).eval();
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) fit.covariance[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = cov(i, j);
  return fit;
}

Prediction predict(const PowerLawFit& fit, double count) {
  if (!(count > 0.0)) throw FitError("predict needs a positive parameter count");
  const double cb = std::pow(count, fit.b);
  Prediction p;
  p.loss = fit.a * cb + fit.c;
  const Vec3 g(cb, fit.a * cb * std::log(count), 1.0);
  Mat3 cov;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cov(i, j) = fit.covariance[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const double var = std::max(0.0, g.dot(cov * g));
  p.sigma = std::sqrt(var);
  return p;
}

double PowerLawFit::residual_norm() const {
  double s = 0.0;
  for (double r : residuals) s += r * r;
  return std::sqrt(s);
}

EmbeddingAblation fit_with_and_without_embeddings(const std::vector<AblationPoint>& points,
                                                  const FitOptions& options) {
  std::vector<FitPoint> with, without;
  for (const auto& pt : points) {
    with.emplace_back(pt.count_with, pt.loss, pt.weight, pt.tag);
    without.emplace_back(pt.count_without, pt.loss, pt.weight, pt.tag);
  }
  EmbeddingAblation out;
  out.with_embeddings = fit_power_law(with, options);
  out.without_embeddings = fit_power_law(without, options);
  return out;
}

std::string PowerLawFit::to_json() const {
  using json = nlohmann::ordered_json;
  json j;
  j["a"] = a;
  j["b"] = b;
  j["c"] = c;
  j["covariance"] = covariance;
  j["residuals"] = residuals;
  j["units"] = units;
  j["iterations"] = iterations;
  j["gradient_norm"] = gradient_norm;
  j["ssr"] = ssr;
  j["converged"] = converged;
  return j.dump(2);
}

PowerLawFit PowerLawFit::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PowerLawFit fit;
  fit.a = j.at("a").get<double>();
  fit.b = j.at("b").get<double>();
  fit.c = j.at("c").get<double>();
  if (j.contains("covariance")) {
    const auto& cv = j.at("covariance");
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 3; ++k) fit.covariance[i][k] = cv.at(i).at(k).get<double>();
  }
  if (j.contains("residuals")) fit.residuals = j.at("residuals").get<std::vector<double>>();
  if (j.contains("units")) fit.units = j.at("units").get<double>();
  if (j.contains("iterations")) fit.iterations = j.at("iterations").get<int>();
  if (j.contains("gradient_norm")) fit.gradient_norm = j.at("gradient_norm").get<double>();
  if (j.contains("ssr")) fit.ssr = j.at("ssr").get<double>();
  if (j.contains("converged")) fit.converged = j.at("converged").get<bool>();
  return fit;
}

}  // namespace muscale
