#include "vdr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "vdr/query.hpp"
#include "vdr/rng.hpp"

namespace vdr {

GridSpec default_synthetic_grid(int M, int T) {
  constexpr double lat0 = 29.7604, lon0 = -95.3698, cell_m = 30.0, slice_s = 3.0 * 3600.0;
  const double m_per_deg = kEarthRadiusM * std::numbers::pi / 180.0;
  const double dlat = M * cell_m / m_per_deg;
  const double dlon = M * cell_m / (m_per_deg * std::cos(lat0 * std::numbers::pi / 180.0));
  GridSpec g;
  g.M = M;
  g.T = T;
  g.lat = {lat0 - dlat / 2, lat0 + dlat / 2};
  g.lon = {lon0 - dlon / 2, lon0 + dlon / 2};
  g.time = {1.6e9, 1.6e9 + T * slice_s};
  return g;
}

void GmmSpec::validate() const {
  if (components < 1) throw Error(ErrorCode::InvalidArgument, "need at least one component");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  if (lattice < 1) throw Error(ErrorCode::InvalidArgument, "lattice must be >= 1");
  if (static_cast<long long>(components) > static_cast<long long>(lattice) * lattice * lattice) {
    throw Error(ErrorCode::InvalidArgument, "more components than lattice points");
  }
}

GmmSample gmm_generate(const GmmSpec& spec, const GridSpec& grid) {
  spec.validate();
  grid.validate();
  Rng rng = make_rng(spec.seed, "gmm");

  const int L = spec.lattice;
  std::vector<int> lattice(static_cast<std::size_t>(L) * L * L);
  std::iota(lattice.begin(), lattice.end(), 0);
  // Partial Fisher-Yates: the first `components` entries are the centers.
  for (int i = 0; i < spec.components; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), lattice.size() - 1);
    std::swap(lattice[static_cast<std::size_t>(i)], lattice[pick(rng)]);
  }
  const double extent[3] = {static_cast<double>(grid.M), static_cast<double>(grid.M),
                            static_cast<double>(grid.T)};
  GmmSample out;
  out.centers.resize(spec.components, 3);
  for (int c = 0; c < spec.components; ++c) {
    int id = lattice[static_cast<std::size_t>(c)];
    const int idx[3] = {id / (L * L), (id / L) % L, id % L};
    // Snap to the center of the cell containing the mapped lattice point, so
    // a center never sits on a cell edge.
    for (int a = 0; a < 3; ++a) out.centers(c, a) = std::floor((idx[a] + 0.5) / L * extent[a]) + 0.5;
  }

  std::uniform_int_distribution<int> which(0, spec.components - 1);
  std::normal_distribution<double> gauss(0.0, spec.sigma);
  std::vector<PointRecord> records;
  records.reserve(spec.total_points);
  out.component.reserve(spec.total_points);
  const Interval* ranges[3] = {&grid.lat, &grid.lon, &grid.time};
  char id[32];
  for (std::size_t i = 0; i < spec.total_points; ++i) {
    const int c = which(rng);
    double x[3];
    for (int a = 0; a < 3; ++a) {
      do {
        x[a] = out.centers(c, a) + gauss(rng);
      } while (x[a] < 0.0 || x[a] >= extent[a]);
    }
    PointRecord p;
    std::snprintf(id, sizeof id, "g%07zu", i);
    p.user_id = id;
    p.lat = ranges[0]->min + x[0] / extent[0] * ranges[0]->width();
    p.lon = ranges[1]->min + x[1] / extent[1] * ranges[1]->width();
    p.t = ranges[2]->min + x[2] / extent[2] * ranges[2]->width();
    records.push_back(std::move(p));
    out.component.push_back(c);
  }
  out.dataset = Dataset(std::move(records));
  return out;
}

void PowerLawSpec::validate() const {
  if (!(exponent < -1.0)) throw Error(ErrorCode::InvalidArgument, "power-law exponent must be < -1");
  if (n_users < 1) throw Error(ErrorCode::InvalidArgument, "need at least one user");
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
}

std::vector<int> sample_contribution_sizes(const PowerLawSpec& spec) {
  spec.validate();
  std::vector<double> cdf(static_cast<std::size_t>(spec.k_max));
  double acc = 0.0;
  for (int x = 1; x <= spec.k_max; ++x) {
    acc += std::pow(static_cast<double>(x), spec.exponent);
    cdf[static_cast<std::size_t>(x - 1)] = acc;
  }
  for (double& v : cdf) v /= acc;
  cdf.back() = 1.0;

  Rng rng = make_rng(spec.seed, "powerlaw");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> sizes(spec.n_users);
  for (int& s : sizes) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u(rng));
    s = static_cast<int>(it - cdf.begin()) + 1;
  }
  return sizes;
}

Dataset powerlaw_assign(const Dataset& dataset, const PowerLawSpec& spec) {
  const std::vector<int> sizes = sample_contribution_sizes(spec);
  const std::size_t capacity =
      std::accumulate(sizes.begin(), sizes.end(), std::size_t{0},
                      [](std::size_t a, int s) { return a + static_cast<std::size_t>(s); });
  if (capacity < dataset.size()) {
    throw Error(ErrorCode::InsufficientRecords,
                "sampled contributions cover " + std::to_string(capacity) + " of " +
                    std::to_string(dataset.size()) + " records");
  }
  std::vector<PointRecord> records = dataset.records();
  std::size_t next = 0;
  char id[32];
  for (std::size_t u = 0; u < sizes.size() && next < records.size(); ++u) {
    std::snprintf(id, sizeof id, "u%07zu", u);
    for (int j = 0; j < sizes[u] && next < records.size(); ++j) records[next++].user_id = id;
  }
  return Dataset(std::move(records));
}

StreamResult release_stream(const std::vector<Dataset>& datasets, const std::vector<double>& budgets,
                            std::optional<int> retrain_period, const PipelineConfig& config) {
  if (datasets.size() != budgets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one budget per release is required");
  }
  for (double b : budgets) {
    if (!(b > 0.0)) throw Error(ErrorCode::DegenerateParams, "release budgets must be positive");
  }
  if (retrain_period && *retrain_period < 1) {
    throw Error(ErrorCode::InvalidArgument, "retrain period must be >= 1");
  }
  StreamResult out;
  std::optional<ModelParams> model;
  std::size_t last_train = 0;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    PipelineConfig c = config;
    c.epsilon = budgets[i];
    c.seed = config.seed + i;
    c.train.seed = config.train.seed + i;
    const bool retrain =
        !model || (retrain_period && i - last_train >= static_cast<std::size_t>(*retrain_period));
    PipelineResult r = retrain ? run_pipeline(datasets[i], c, out.ledger)
                               : run_pipeline_with_model(datasets[i], c, *model, out.ledger);
    if (retrain) {
      model = r.model;
      last_train = i;
    }
    out.retrained.push_back(retrain);
    out.releases.push_back(std::move(r));
  }
  return out;
}

}  // namespace vdr
