#pragma once

#include <Eigen/Dense>

#include "vdr/core.hpp"

namespace vdr {

inline constexpr double kDefaultRefinementFactor = 5e-5;
inline constexpr double kDefaultGrowthRatio = 2.5e-7;

/// Inputs of the MSE-optimal scaling factor. N and n are public metadata.
struct RefineParams {
  double N = 1.0;          ///< true data size
  double n = 1.0;          ///< sampled data size
  double m = 1.0;          ///< cell count M*M*T
  double k = 1.0;          ///< contribution bound
  double epsilon = 1.0;
  double C = kDefaultRefinementFactor;
  double lambda = kDefaultGrowthRatio;
  double g = 1.0;          ///< exponent of the naive N/n baseline

  void validate() const;

  /// Parameters for refining `hist`; m is taken from its grid.
  static RefineParams for_histogram(const Histogram3D& hist, double N, double n, double k,
                                    double epsilon, double C = kDefaultRefinementFactor);
};

/// Cell proportions mu_c of the iid sampling model.
struct SamplingModel {
  Eigen::VectorXd mu;

  void validate() const;
  /// sum_c mu_c^2
  double concentration() const { return mu.squaredNorm(); }
};

/// gamma = nNC / (2 m k^2 / eps^2 + (1 - C) n + C n^2), the minimizer of the
/// summed per-cell MSE of gamma * (sum_i X_i^c + Lap(k / eps)).
double optimal_gamma(const RefineParams& params);

struct MseComponents {
  Eigen::VectorXd bias;      ///< mu_c (gamma n - N)
  Eigen::VectorXd variance;  ///< gamma^2 (n mu_c (1 - mu_c) + 2 k^2 / eps^2)
  Eigen::VectorXd mse;       ///< bias^2 + variance
  double total_mse = 0.0;
};

MseComponents mse_components(double gamma, const SamplingModel& model, const RefineParams& params);

/// Sum over cells of the closed-form MSE. Cheaper than mse_components when
/// only the total is needed.
double total_mse(double gamma, const SamplingModel& model, const RefineParams& params);

/// Multiplies every cell by `gamma`. No clamping.
Histogram3D refine(const Histogram3D& hist, double gamma);

/// max(1, round(lambda * N))
long long heuristic_k(long long N, double lambda = kDefaultGrowthRatio);

/// Multiplies every cell by g * N / n.
Histogram3D naive_scale(const Histogram3D& hist, double g, double N, double n);

/// Elementwise max(0, x); only used when a release asks for it.
Histogram3D clamp_nonnegative(const Histogram3D& hist);

}  // namespace vdr
