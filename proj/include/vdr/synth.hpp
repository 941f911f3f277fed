#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "vdr/collect.hpp"
#include "vdr/core.hpp"
#include "vdr/pipeline.hpp"

namespace vdr {

/// 64 x 64 x 32 grid of roughly 30 m cells and 3 h slices in central Houston.
GridSpec default_synthetic_grid(int M = 64, int T = 32);

struct GmmSpec {
  int components = 50;
  double sigma = 3.0;  ///< std per axis, in cell units (slices for time)
  int lattice = 9;
  std::size_t total_points = 200000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GmmSample {
  Dataset dataset;
  std::vector<int> component;   ///< component of each record
  Eigen::MatrixX3d centers;     ///< (row, col, t) in cell units
};

/// Equal-weight isotropic mixture. Centers are distinct lattice points, with
/// lattice point i mapped to the center of the cell holding
/// ((i + 0.5) / lattice) * cells along each axis.
/// Offsets that leave the grid are redrawn, so every point lands inside.
/// Each record belongs to its own user.
GmmSample gmm_generate(const GmmSpec& spec, const GridSpec& grid);

struct PowerLawSpec {
  double exponent = -2.69;
  double scalar = 5.16;  ///< a in f(x) = a x^b; descriptive only
  std::size_t n_users = 10000;
  int k_max = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-user contribution sizes drawn from P(x) proportional to x^b on
/// [1, k_max] by inverse CDF.
std::vector<int> sample_contribution_sizes(const PowerLawSpec& spec);

/// Reassigns records to users in consecutive blocks of sampled sizes; the
/// last user may receive a partial block. Throws InsufficientRecords when the
/// sizes do not cover the dataset.
Dataset powerlaw_assign(const Dataset& dataset, const PowerLawSpec& spec);

struct StreamResult {
  std::vector<PipelineResult> releases;
  std::vector<bool> retrained;
  PrivacyLedger ledger;
};

/// One pipeline release per dataset with budget budgets[i]. The model is
/// retrained when i - last_train >= retrain_period (nullopt: never after the
/// first release). Release i uses seed config.seed + i.
StreamResult release_stream(const std::vector<Dataset>& datasets, const std::vector<double>& budgets,
                            std::optional<int> retrain_period, const PipelineConfig& config);

}  // namespace vdr
