#include "vdr/collect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vdr {

void CollectParams::validate() const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorCode::BadScale, "epsilon must be positive and finite");
  }
}

void PrivacyLedger::record(std::string label, double epsilon) {
  entries_.push_back({std::move(label), epsilon});
}

double PrivacyLedger::total() const {
  double sum = 0.0;
  for (const auto& e : entries_) sum += e.epsilon;
  return sum;
}

Dataset bound_contributions(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto kk = static_cast<std::size_t>(k);
  std::vector<char> keep(dataset.size(), 0);
  for (const auto& [user, indices] : dataset.per_user_index()) {
    if (indices.size() <= kk) {
      for (std::size_t i : indices) keep[i] = 1;
      continue;
    }
    // Partial Fisher-Yates: the first k positions end up a uniform k-subset.
    std::vector<std::size_t> pool = indices;
    Rng rng = make_rng(seed, user);
    for (std::size_t i = 0; i < kk; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      keep[pool[i]] = 1;
    }
  }
  std::vector<PointRecord> out;
  out.reserve(dataset.size());
  const auto& records = dataset.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return Dataset(std::move(out));
}

double laplace_from_uniform(double scale, double u) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::BadScale, "Laplace scale must be positive and finite");
  }
  const double sign = (u > 0.0) - (u < 0.0);
  return -scale * sign * std::log(1.0 - 2.0 * std::abs(u));
}

double laplace_sample(double scale, Rng& rng) {
  std::uniform_real_distribution<double> uniform(-0.5, 0.5);
  double u = uniform(rng);
  while (u <= -0.5) u = uniform(rng);  // log(0) at the open end
  return laplace_from_uniform(scale, u);
}

Histogram3D perturb(const Histogram3D& hist, int k, double epsilon, Rng& rng,
                    PrivacyLedger& ledger, const std::string& label) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon) || k < 1) {
    throw Error(ErrorCode::BadScale, "perturb needs k >= 1 and finite epsilon > 0");
  }
  const double scale = static_cast<double>(k) / epsilon;
  Histogram3D noisy = hist;
  for (double& v : noisy.counts()) v += laplace_sample(scale, rng);
  ledger.record(label, epsilon);
  return noisy;
}

Histogram3D sampled_histogram(const Dataset& dataset, const GridSpec& grid, int k,
                              std::uint64_t seed, BoundaryMode mode) {
  return discretize(bound_contributions(dataset, k, seed), grid, mode);
}

CollectResult collect(const Dataset& dataset, const GridSpec& grid, const CollectParams& params,
                      PrivacyLedger& ledger, BoundaryMode mode) {
  params.validate();
  const Dataset sampled = bound_contributions(dataset, params.k, params.seed);
  const Histogram3D exact = discretize(sampled, grid, mode);
  Rng noise_rng = make_rng(params.seed, "laplace-noise");
  return {perturb(exact, params.k, params.epsilon, noise_rng, ledger), sampled.size()};
}

}  // namespace vdr
