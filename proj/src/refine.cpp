#include "vdr/refine.hpp"

#include <cmath>

namespace vdr {

void RefineParams::validate() const {
  if (!(n > 0.0 && n <= N)) throw Error(ErrorCode::DegenerateParams, "need 0 < n <= N");
  if (!(m >= 1.0)) throw Error(ErrorCode::DegenerateParams, "need m >= 1");
  if (!(k > 0.0)) throw Error(ErrorCode::DegenerateParams, "need k > 0");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::DegenerateParams, "need epsilon > 0");
  if (!(C > 0.0 && C <= 1.0)) throw Error(ErrorCode::DegenerateParams, "need C in (0, 1]");
  if (!(lambda > 0.0)) throw Error(ErrorCode::DegenerateParams, "need lambda > 0");
}

RefineParams RefineParams::for_histogram(const Histogram3D& hist, double N, double n, double k,
                                         double epsilon, double C) {
  RefineParams p;
  p.N = N;
  p.n = n;
  p.m = static_cast<double>(hist.size());
  p.k = k;
  p.epsilon = epsilon;
  p.C = C;
  return p;
}

void SamplingModel::validate() const {
  if (mu.size() == 0) throw Error(ErrorCode::DegenerateParams, "empty sampling model");
  if ((mu.array() < 0.0).any()) throw Error(ErrorCode::DegenerateParams, "mu must be non-negative");
  if (std::abs(mu.sum() - 1.0) > 1e-12) throw Error(ErrorCode::DegenerateParams, "mu must sum to 1");
}

double optimal_gamma(const RefineParams& p) {
  p.validate();
  const double noise = 2.0 * p.m * p.k * p.k / (p.epsilon * p.epsilon);
  const double denom = noise + (1.0 - p.C) * p.n + p.C * p.n * p.n;
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    throw Error(ErrorCode::DegenerateParams, "gamma denominator is not positive");
  }
  return p.n * p.N * p.C / denom;
}

MseComponents mse_components(double gamma, const SamplingModel& model, const RefineParams& p) {
  model.validate();
  if (static_cast<double>(model.mu.size()) != p.m) {
    throw Error(ErrorCode::ShapeMismatch, "sampling model length differs from m");
  }
  const Eigen::ArrayXd mu = model.mu.array();
  const double noise = 2.0 * p.k * p.k / (p.epsilon * p.epsilon);
  MseComponents out;
  out.bias = (mu * (gamma * p.n - p.N)).matrix();
  out.variance = (gamma * gamma * (p.n * mu * (1.0 - mu) + noise)).matrix();
  out.mse = out.bias.cwiseProduct(out.bias) + out.variance;
  out.total_mse = out.mse.sum();
  return out;
}

double total_mse(double gamma, const SamplingModel& model, const RefineParams& p) {
  // sum mu = 1 and sum mu^2 = C collapse the per-cell sums.
  const double c = model.concentration();
  const double noise = 2.0 * p.m * p.k * p.k / (p.epsilon * p.epsilon);
  const double bias = gamma * p.n - p.N;
  return gamma * gamma * (p.n * (1.0 - c) + noise) + c * bias * bias;
}

Histogram3D refine(const Histogram3D& hist, double gamma) {
  if (!std::isfinite(gamma)) throw Error(ErrorCode::DegenerateParams, "gamma must be finite");
  return Histogram3D(hist.grid(), hist.counts() * gamma);
}

long long heuristic_k(long long N, double lambda) {
  if (N < 1) throw Error(ErrorCode::DegenerateParams, "need N >= 1");
  const auto k = std::llround(lambda * static_cast<double>(N));
  return k < 1 ? 1 : k;
}

Histogram3D naive_scale(const Histogram3D& hist, double g, double N, double n) {
  if (!(n > 0.0)) throw Error(ErrorCode::DegenerateParams, "naive scaling needs n > 0");
  return Histogram3D(hist.grid(), hist.counts() * (g * N / n));
}

Histogram3D clamp_nonnegative(const Histogram3D& hist) {
  return Histogram3D(hist.grid(), hist.counts().cwiseMax(0.0));
}

}  // namespace vdr
