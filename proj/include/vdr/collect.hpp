#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vdr/core.hpp"
#include "vdr/rng.hpp"

namespace vdr {

struct CollectParams {
  int k = 1;
  double epsilon = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Append-only record of privacy budget spent.
class PrivacyLedger {
 public:
  struct Entry {
    std::string label;
    double epsilon = 0.0;
  };

  void record(std::string label, double epsilon);
  const std::vector<Entry>& entries() const { return entries_; }
  /// Sum of the recorded epsilons, accumulated in insertion order.
  double total() const;

 private:
  std::vector<Entry> entries_;
};

/// Keeps at most `k` records per user. Users above the bound get a uniform
/// k-subset drawn from a stream keyed by (seed, user_id), so one user's
/// choice never depends on which other users are present. Retained records
/// keep their input order.
Dataset bound_contributions(const Dataset& dataset, int k, std::uint64_t seed);

/// Inverse-CDF Laplace draw for a fixed uniform `u` in (-0.5, 0.5).
double laplace_from_uniform(double scale, double u);

double laplace_sample(double scale, Rng& rng);

/// Adds i.i.d. Laplace(k / epsilon) noise to every cell and records epsilon
/// in the ledger. Cells are not clamped.
Histogram3D perturb(const Histogram3D& hist, int k, double epsilon, Rng& rng,
                    PrivacyLedger& ledger, const std::string& label = "collect");

/// Pre-noise histogram of the contribution-bounded dataset.
Histogram3D sampled_histogram(const Dataset& dataset, const GridSpec& grid, int k,
                              std::uint64_t seed,
                              BoundaryMode mode = BoundaryMode::Strict);

struct CollectResult {
  Histogram3D noisy;
  std::size_t n = 0;  ///< |D_s|, treated as public metadata
};

/// bound_contributions -> discretize -> perturb, spending `params.epsilon` once.
CollectResult collect(const Dataset& dataset, const GridSpec& grid, const CollectParams& params,
                      PrivacyLedger& ledger, BoundaryMode mode = BoundaryMode::Strict);

}  // namespace vdr
