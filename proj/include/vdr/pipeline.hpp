#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vdr/collect.hpp"
#include "vdr/core.hpp"
#include "vdr/denoise.hpp"
#include "vdr/refine.hpp"

namespace vdr {

struct PipelineConfig {
  GridSpec grid;
  double epsilon = 0.2;
  std::optional<int> k;  ///< nullopt: heuristic_k(N, lambda)
  double lambda = kDefaultGrowthRatio;
  double C = kDefaultRefinementFactor;
  std::vector<int> factors{1, 2, 4};
  TrainConfig train;
  std::optional<double> psi;
  std::uint64_t seed = 0;
  bool clamp_nonneg = false;
  BoundaryMode boundary = BoundaryMode::Strict;

  /// k actually used for a dataset of `N` records.
  int resolve_k(std::size_t N) const;
};

struct PipelineResult {
  int k = 1;
  std::size_t N = 0;
  CollectResult collected;
  ModelParams model;
  TrainReport report;
  Histogram3D denoised;
  double gamma = 1.0;
  Histogram3D released;
};

/// gamma for a denoised histogram; m comes from its grid.
double release_gamma(const Histogram3D& denoised, std::size_t N, std::size_t n, int k,
                     double epsilon, double C);

/// Final release step: refine by gamma, optionally clamp at zero.
Histogram3D finalize_release(const Histogram3D& denoised, double gamma, bool clamp_nonneg);

/// collect -> train -> denoise -> refine. Spends config.epsilon once.
PipelineResult run_pipeline(const Dataset& dataset, const PipelineConfig& config,
                            PrivacyLedger& ledger);

/// Same as run_pipeline but denoises with an existing model instead of training.
PipelineResult run_pipeline_with_model(const Dataset& dataset, const PipelineConfig& config,
                                       const ModelParams& model, PrivacyLedger& ledger);

}  // namespace vdr
