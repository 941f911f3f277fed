#include "vdr/query.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <tuple>
#include <utility>

#include "vdr/rng.hpp"

namespace vdr {

namespace {

/// Fraction of each cell along `axis` covered by [lo, hi]; returns the first
/// covered index and the fractions from there on.
std::pair<int, std::vector<double>> axis_coverage(const GridSpec& grid, Axis axis, double lo,
                                                  double hi) {
  const Interval& r = grid.range(axis);
  std::vector<double> frac;
  if (hi < r.min || lo > r.max || hi < lo) return {0, frac};
  const int first = grid.locate_clamped(axis, lo);
  const int last = grid.locate_clamped(axis, hi);
  for (int i = first; i <= last; ++i) {
    const double a = grid.edge(axis, i);
    const double b = grid.edge(axis, i + 1);
    const double overlap = std::min(b, hi) - std::max(a, lo);
    frac.push_back(overlap > 0.0 ? overlap / (b - a) : 0.0);
  }
  return {first, frac};
}

double meters_per_degree_lat() { return kEarthRadiusM * std::numbers::pi / 180.0; }

double meters_per_degree_lon(const GridSpec& grid) {
  const double mid = 0.5 * (grid.lat.min + grid.lat.max) * std::numbers::pi / 180.0;
  return meters_per_degree_lat() * std::cos(mid);
}

struct Candidate {
  double distance;
  int t;
  int row;
  int col;

  auto key() const { return std::tie(distance, t, row, col); }
};

}  // namespace

// ---------------------------------------------------------------------------

double range_count(const Histogram3D& hist, const RangeQuery& q) {
  const GridSpec& g = hist.grid();
  const auto [r0, fr] = axis_coverage(g, Axis::Lat, q.lat.min, q.lat.max);
  const auto [c0, fc] = axis_coverage(g, Axis::Lon, q.lon.min, q.lon.max);
  const auto [t0, ft] = axis_coverage(g, Axis::Time, q.time.min, q.time.max);
  double total = 0.0;
  for (std::size_t ti = 0; ti < ft.size(); ++ti) {
    if (ft[ti] == 0.0) continue;
    for (std::size_t ri = 0; ri < fr.size(); ++ri) {
      if (fr[ri] == 0.0) continue;
      for (std::size_t ci = 0; ci < fc.size(); ++ci) {
        if (fc[ci] == 0.0) continue;
        const double w = ft[ti] * fr[ri] * fc[ci];
        total += w * hist(t0 + static_cast<int>(ti), r0 + static_cast<int>(ri), c0 + static_cast<int>(ci));
      }
    }
  }
  return total;
}

double relative_error(double y, double u, double psi) {
  if (!(psi > 0.0)) throw Error(ErrorCode::InvalidArgument, "psi must be positive");
  return std::abs(y - u) / std::max(u, psi);
}

double psi_default(const Histogram3D& hist) {
  return std::max(1e-9, 0.001 * hist.sum() / static_cast<double>(hist.T()));
}

// ---------------------------------------------------------------------------

CellMetrics CellMetrics::of(const GridSpec& grid) {
  return {grid.lat.width() / grid.M * meters_per_degree_lat(),
          grid.lon.width() / grid.M * meters_per_degree_lon(grid)};
}

double CellMetrics::distance(int drow, int dcol) const {
  const double y = drow * row_m;
  const double x = dcol * col_m;
  return std::sqrt(x * x + y * y);
}

HotspotAnswer hotspot(const Histogram3D& hist, const HotspotQuery& q) {
  const GridSpec& g = hist.grid();
  const auto qr = g.locate(Axis::Lat, q.lat);
  const auto qc = g.locate(Axis::Lon, q.lon);
  const auto qt = g.locate(Axis::Time, q.t);
  if (!qr || !qc || !qt) throw Error(ErrorCode::OutOfDomain, "hotspot query lies outside the grid");
  if (!(q.nu > 0.0) || !(q.sr_m > 0.0) || (q.sr_t && !(*q.sr_t > 0.0))) {
    throw Error(ErrorCode::InvalidArgument, "hotspot needs nu > 0 and positive extents");
  }

  const CellMetrics cm = CellMetrics::of(g);
  const double half = 0.5 * q.sr_m;
  // Largest row/column offsets whose cell centers stay inside the square.
  const int reach_r = static_cast<int>(std::floor(half / cm.row_m));
  const int reach_c = static_cast<int>(std::floor(half / cm.col_m));
  const int r_lo = std::max(0, *qr - reach_r), r_hi = std::min(g.M - 1, *qr + reach_r);
  const int c_lo = std::max(0, *qc - reach_c), c_hi = std::min(g.M - 1, *qc + reach_c);
  int t_lo = 0, t_hi = g.T - 1;
  if (q.sr_t) {
    const double slice_s = g.time.width() / g.T;
    const int reach_t = static_cast<int>(std::floor(0.5 * *q.sr_t / slice_s));
    t_lo = std::max(0, *qt - reach_t);
    t_hi = std::min(g.T - 1, *qt + reach_t);
  }

  auto make_answer = [&](int t, int row, int col, bool met) {
    HotspotAnswer a;
    a.t = t;
    a.row = row;
    a.col = col;
    a.cell = hist.index(t, row, col);
    a.distance_m = cm.distance(row - *qr, col - *qc);
    a.count = hist(t, row, col);
    a.met_threshold = met;
    return a;
  };

  std::optional<Candidate> best;
  const double ring_step = std::min(cm.row_m, cm.col_m);
  const int max_ring = std::max({*qr - r_lo, r_hi - *qr, *qc - c_lo, c_hi - *qc});
  for (int ring = 0; ring <= max_ring; ++ring) {
    if (best && ring * ring_step > best->distance) break;
    for (int dr = -ring; dr <= ring; ++dr) {
      const int row = *qr + dr;
      if (row < r_lo || row > r_hi) continue;
      // Interior rows of the ring only contribute their two end columns.
      const int step = (dr == -ring || dr == ring) ? 1 : std::max(1, 2 * ring);
      for (int dc = -ring; dc <= ring; dc += step) {
        const int col = *qc + dc;
        if (col < c_lo || col > c_hi) continue;
        const double d = cm.distance(dr, dc);
        for (int t = t_lo; t <= t_hi; ++t) {
          if (hist(t, row, col) < q.nu) continue;
          const Candidate c{d, t, row, col};
          if (!best || c.key() < best->key()) best = c;
          break;  // later t at this cell cannot win the tie-break
        }
      }
    }
  }
  if (best) return make_answer(best->t, best->row, best->col, true);

  int bt = t_lo, br = r_lo, bc = c_lo;
  for (int t = t_lo; t <= t_hi; ++t) {
    for (int row = r_lo; row <= r_hi; ++row) {
      for (int col = c_lo; col <= c_hi; ++col) {
        if (hist(t, row, col) > hist(bt, br, bc)) {
          bt = t;
          br = row;
          bc = col;
        }
      }
    }
  }
  return make_answer(bt, br, bc, false);
}

HotspotMetrics hotspot_metrics(const Histogram3D& truth, const Histogram3D& released,
                               std::span<const HotspotQuery> queries, RegretMode mode) {
  if (!(truth.grid() == released.grid())) {
    throw Error(ErrorCode::ShapeMismatch, "hotspot metrics need histograms on one grid");
  }
  HotspotMetrics m;
  if (queries.empty()) return m;
  double abs_sum = 0.0, regret_sum = 0.0;
  for (const HotspotQuery& q : queries) {
    const HotspotAnswer on_truth = hotspot(truth, q);
    const HotspotAnswer on_release = hotspot(released, q);
    abs_sum += std::abs(on_truth.distance_m - on_release.distance_m);
    const double found = mode == RegretMode::TrueCount ? truth.counts()[static_cast<Eigen::Index>(on_release.cell)]
                                                       : on_release.count;
    regret_sum += std::max(0.0, q.nu - found);
  }
  const auto n = static_cast<double>(queries.size());
  m.mae_m = abs_sum / n;
  m.mean_regret = regret_sum / n;
  return m;
}

// ---------------------------------------------------------------------------

std::vector<double> theta_forecast(std::span<const double> series, int horizon) {
  const std::size_t n = series.size();
  if (n < 3) throw Error(ErrorCode::SeriesTooShort, "theta needs at least 3 observations");
  if (horizon < 1) throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
  for (double v : series) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "series must be finite");
  }

  // Least-squares line a + b t over t = 1..n.
  const double nn = static_cast<double>(n);
  const double t_mean = (nn + 1.0) / 2.0;
  double y_mean = 0.0;
  for (double v : series) y_mean += v;
  y_mean /= nn;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i + 1) - t_mean;
    sxy += dt * (series[i] - y_mean);
    sxx += dt * dt;
  }
  const double b = sxy / sxx;
  const double a = y_mean - b * t_mean;

  std::vector<double> theta2(n);
  for (std::size_t i = 0; i < n; ++i) {
    theta2[i] = 2.0 * series[i] - (a + b * static_cast<double>(i + 1));
  }

  auto run_ses = [&theta2](double alpha, double& sse) {
    double level = theta2[0];
    sse = 0.0;
    for (std::size_t i = 1; i < theta2.size(); ++i) {
      const double err = theta2[i] - level;
      sse += err * err;
      level += alpha * err;
    }
    return level;
  };

  double best_sse = std::numeric_limits<double>::infinity();
  double level = theta2[0];
  for (int step = 1; step <= 99; ++step) {
    double sse = 0.0;
    const double l = run_ses(step / 100.0, sse);
    if (sse < best_sse) {
      best_sse = sse;
      level = l;
    }
  }

  std::vector<double> out(static_cast<std::size_t>(horizon));
  for (int j = 1; j <= horizon; ++j) {
    out[static_cast<std::size_t>(j - 1)] = 0.5 * level + 0.5 * (a + b * (nn + j));
  }
  return out;
}

double smape(std::span<const double> actual, std::span<const double> forecast) {
  if (actual.size() != forecast.size() || actual.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "sMAPE needs equal, non-empty horizons");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double denom = (actual[i] + forecast[i]) / 2.0;
    if (denom == 0.0) continue;
    sum += std::abs(forecast[i] - actual[i]) / denom;
  }
  return sum / static_cast<double>(actual.size());
}

double autocorrelation(std::span<const double> series, int lag) {
  const std::size_t n = series.size();
  if (lag < 1 || n <= static_cast<std::size_t>(lag) + 2) {
    throw Error(ErrorCode::SeriesTooShort, "series too short for lag " + std::to_string(lag));
  }
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : series) denom += (v - mean) * (v - mean);
  if (denom == 0.0) return 0.0;
  double num = 0.0;
  for (std::size_t i = 0; i + static_cast<std::size_t>(lag) < n; ++i) {
    num += (series[i] - mean) * (series[i + static_cast<std::size_t>(lag)] - mean);
  }
  return num / denom;
}

bool acf_seasonal_test(std::span<const double> series, int lag, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence must lie in (0, 1)");
  }
  const double r = autocorrelation(series, lag);
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), confidence);
  return r > z / std::sqrt(static_cast<double>(series.size()));
}

std::vector<double> cell_series(const Histogram3D& hist, int row, int col) {
  if (row < 0 || row >= hist.M() || col < 0 || col >= hist.M()) {
    throw Error(ErrorCode::OutOfDomain, "cell outside the grid");
  }
  std::vector<double> s(static_cast<std::size_t>(hist.T()));
  for (int t = 0; t < hist.T(); ++t) s[static_cast<std::size_t>(t)] = hist(t, row, col);
  return s;
}

// ---------------------------------------------------------------------------

std::vector<RangeQuery> gen_rcq_workload(const Dataset& dataset, const GridSpec& grid,
                                         const RcqWorkloadSpec& spec) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "workload needs records");
  if (!(spec.side_min_m > 0.0 && spec.side_max_m >= spec.side_min_m)) {
    throw Error(ErrorCode::InvalidArgument, "bad workload side range");
  }
  Rng rng = make_rng(spec.seed, "rcq-workload");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_real_distribution<double> side(spec.side_min_m, spec.side_max_m);
  const double lat_m = meters_per_degree_lat();
  const double lon_m = meters_per_degree_lon(grid);
  std::vector<RangeQuery> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const PointRecord& p = dataset.records()[pick(rng)];
    const double half = 0.5 * side(rng);
    const int t = grid.locate_clamped(Axis::Time, p.t);
    RangeQuery q;
    q.lat = {p.lat - half / lat_m, p.lat + half / lat_m};
    q.lon = {p.lon - half / lon_m, p.lon + half / lon_m};
    q.time = {grid.edge(Axis::Time, t), grid.edge(Axis::Time, t + 1)};
    out.push_back(q);
  }
  return out;
}

std::vector<HotspotQuery> gen_hotspot_workload(const Dataset& dataset, const GridSpec& grid,
                                               std::size_t count, double nu, double sr_m,
                                               std::uint64_t seed) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "workload needs records");
  Rng rng = make_rng(seed, "hotspot-workload");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<HotspotQuery> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const PointRecord& p = dataset.records()[pick(rng)];
    HotspotQuery q;
    q.lat = std::clamp(p.lat, grid.lat.min, grid.lat.max);
    q.lon = std::clamp(p.lon, grid.lon.min, grid.lon.max);
    q.t = std::clamp(p.t, grid.time.min, grid.time.max);
    q.nu = nu;
    q.sr_m = sr_m;
    out.push_back(q);
  }
  return out;
}

std::vector<ForecastQuery> gen_forecast_workload(const Dataset& dataset, const Histogram3D& truth,
                                                 std::size_t count, int horizon,
                                                 std::uint64_t seed) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "workload needs records");
  const GridSpec& g = truth.grid();
  if (g.T - horizon <= 8 + 2) {
    throw Error(ErrorCode::SeriesTooShort, "too few slices for a seasonal fitting window");
  }
  Rng rng = make_rng(seed, "forecast-workload");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::set<std::pair<int, int>> seen;
  std::vector<ForecastQuery> out;
  const std::size_t attempts = 50 * count + 100;
  for (std::size_t a = 0; a < attempts && out.size() < count; ++a) {
    const PointRecord& p = dataset.records()[pick(rng)];
    const int row = g.locate_clamped(Axis::Lat, p.lat);
    const int col = g.locate_clamped(Axis::Lon, p.lon);
    if (!seen.insert({row, col}).second) continue;
    const auto series = cell_series(truth, row, col);
    const std::span<const double> fit(series.data(), static_cast<std::size_t>(g.T - horizon));
    if (acf_seasonal_test(fit)) out.push_back({row, col, horizon});
  }
  return out;
}

double forecast_smape(const Histogram3D& truth, const Histogram3D& released,
                      const ForecastQuery& q) {
  if (!truth.same_shape(released)) throw Error(ErrorCode::ShapeMismatch, "histograms differ in shape");
  const int fit_len = truth.T() - q.horizon;
  if (fit_len < 3) throw Error(ErrorCode::SeriesTooShort, "holdout leaves fewer than 3 points");
  const auto observed = cell_series(released, q.row, q.col);
  const auto actual = cell_series(truth, q.row, q.col);
  const auto forecast =
      theta_forecast(std::span(observed).first(static_cast<std::size_t>(fit_len)), q.horizon);
  return smape(std::span(actual).subspan(static_cast<std::size_t>(fit_len)), forecast);
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "median of nothing");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double count_points(const Dataset& dataset, const RangeQuery& q) {
  double n = 0.0;
  for (const PointRecord& p : dataset.records()) {
    if (q.lat.contains(p.lat) && q.lon.contains(p.lon) && q.time.contains(p.t)) n += 1.0;
  }
  return n;
}

std::vector<double> answer_all(const Histogram3D& hist, std::span<const RangeQuery> queries) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const RangeQuery& q : queries) out.push_back(range_count(hist, q));
  return out;
}

double median_relative_error(std::span<const double> truth, const Histogram3D& released,
                             std::span<const RangeQuery> queries, double psi) {
  if (truth.size() != queries.size()) {
    throw Error(ErrorCode::ShapeMismatch, "one true answer per query is required");
  }
  std::vector<double> errors;
  errors.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    errors.push_back(relative_error(range_count(released, queries[i]), truth[i], psi));
  }
  return median(std::move(errors));
}

}  // namespace vdr
