#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vdr/core.hpp"

namespace vdr {

inline constexpr double kEarthRadiusM = 6371008.8;

// ---------------------------------------------------------------------------
// Range count

struct RangeQuery {
  Interval lat;
  Interval lon;
  Interval time;
};

/// Sum of cell counts weighted by the fraction of each cell's volume the box
/// covers (points are taken as uniform within a cell). Cells fully inside
/// count whole; a box that misses the grid answers 0.
double range_count(const Histogram3D& hist, const RangeQuery& q);

/// |y - u| / max(u, psi)
double relative_error(double y, double u, double psi);

/// 0.1% of the average slice cardinality, floored at 1e-9.
double psi_default(const Histogram3D& hist);

// ---------------------------------------------------------------------------
// Hotspot

/// Square search region of side `sr_m` meters centered on q's cell; the time
/// extent is a window of `sr_t` seconds centered on q, or unbounded.
struct HotspotQuery {
  double lat = 0.0;
  double lon = 0.0;
  double t = 0.0;
  double nu = 1.0;
  double sr_m = 5000.0;
  std::optional<double> sr_t;
};

struct HotspotAnswer {
  std::size_t cell = 0;  ///< flat histogram index
  int t = 0;
  int row = 0;
  int col = 0;
  double distance_m = 0.0;
  double count = 0.0;
  bool met_threshold = false;

  friend bool operator==(const HotspotAnswer&, const HotspotAnswer&) = default;
};

/// Meters per cell along latitude (rows) and longitude (columns) under an
/// equirectangular projection at the grid's mid-latitude.
struct CellMetrics {
  double row_m = 0.0;
  double col_m = 0.0;

  static CellMetrics of(const GridSpec& grid);
  double distance(int drow, int dcol) const;
};

/// Nearest cell (by center-to-center distance from q's cell) within SR whose
/// count reaches nu, found by expanding square rings around q's cell. Ties go
/// to the smaller (t, row, col). Without a qualifying cell the max-count cell
/// within SR is reported with met_threshold = false.
HotspotAnswer hotspot(const Histogram3D& hist, const HotspotQuery& q);

enum class RegretMode {
  TrueCount,      ///< max(0, nu - H[cell found on the release])
  ReleasedCount,  ///< max(0, nu - release[cell found on the release])
};

struct HotspotMetrics {
  double mae_m = 0.0;
  double mean_regret = 0.0;
};

HotspotMetrics hotspot_metrics(const Histogram3D& truth, const Histogram3D& released,
                               std::span<const HotspotQuery> queries,
                               RegretMode mode = RegretMode::TrueCount);

// ---------------------------------------------------------------------------
// Forecasting

/// Theta(0, 2): average of the least-squares line and simple exponential
/// smoothing of the doubled-curvature theta line, alpha by grid search over
/// 0.01..0.99.
std::vector<double> theta_forecast(std::span<const double> series, int horizon);

/// Symmetric MAPE; terms with A + F = 0 contribute 0.
double smape(std::span<const double> actual, std::span<const double> forecast);

/// Sample autocorrelation at `lag` with the mean-centered denominator; 0 for
/// a constant series.
double autocorrelation(std::span<const double> series, int lag);

/// One-sided seasonality test: r_lag > z_confidence / sqrt(n).
bool acf_seasonal_test(std::span<const double> series, int lag = 8, double confidence = 0.90);

/// Count series of one spatial cell over all time slices.
std::vector<double> cell_series(const Histogram3D& hist, int row, int col);

// ---------------------------------------------------------------------------
// Workloads

struct RcqWorkloadSpec {
  std::size_t count = 5000;
  double side_min_m = 30.0;
  double side_max_m = 120.0;
  std::uint64_t seed = 0;
};

/// Square boxes centered on uniformly chosen records, side uniform in
/// [side_min_m, side_max_m], time extent = the record's slice.
std::vector<RangeQuery> gen_rcq_workload(const Dataset& dataset, const GridSpec& grid,
                                         const RcqWorkloadSpec& spec);

/// Hotspot probes located at uniformly chosen records.
std::vector<HotspotQuery> gen_hotspot_workload(const Dataset& dataset, const GridSpec& grid,
                                               std::size_t count, double nu, double sr_m,
                                               std::uint64_t seed);

struct ForecastQuery {
  int row = 0;
  int col = 0;
  int horizon = 8;
};

/// Cells whose true series passes the seasonality test on its fitting
/// window, sampled at uniformly chosen records.
std::vector<ForecastQuery> gen_forecast_workload(const Dataset& dataset, const Histogram3D& truth,
                                                 std::size_t count, int horizon,
                                                 std::uint64_t seed);

/// Holdout sMAPE: fit on released[0, T-h), compare with truth[T-h, T).
double forecast_smape(const Histogram3D& truth, const Histogram3D& released,
                      const ForecastQuery& q);

double median(std::vector<double> values);

/// Exact number of records inside the closed box.
double count_points(const Dataset& dataset, const RangeQuery& q);

/// range_count of every query.
std::vector<double> answer_all(const Histogram3D& hist, std::span<const RangeQuery> queries);

/// Median over the workload of relative_error(released answer, truth[i], psi).
double median_relative_error(std::span<const double> truth, const Histogram3D& released,
                             std::span<const RangeQuery> queries, double psi);

}  // namespace vdr
