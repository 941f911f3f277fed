#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vdr/error.hpp"

namespace vdr {

/// One location report. `t` is seconds since the Unix epoch.
struct PointRecord {
  std::string user_id;
  double lat = 0.0;
  double lon = 0.0;
  double t = 0.0;
};

/// User-keyed collection of point records.
///
/// The per-user index is built once at construction; users are kept in
/// lexicographic id order so every traversal is deterministic.
class Dataset {
 public:
  using UserIndex = std::map<std::string, std::vector<std::size_t>>;

  Dataset() = default;
  explicit Dataset(std::vector<PointRecord> records);

  const std::vector<PointRecord>& records() const { return records_; }
  const UserIndex& per_user_index() const { return per_user_; }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t user_count() const { return per_user_.size(); }
  std::size_t k_max() const { return k_max_; }

 private:
  std::vector<PointRecord> records_;
  UserIndex per_user_;
  std::size_t k_max_ = 0;
};

struct Interval {
  double min = 0.0;
  double max = 1.0;

  double width() const { return max - min; }
  bool contains(double x) const { return x >= min && x <= max; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class Axis { Lat, Lon, Time };

/// M x M x T equal-degree grid. Rows index latitude (row 0 at lat.min),
/// columns index longitude.
struct GridSpec {
  int M = 1;
  int T = 1;
  Interval lat{0.0, 1.0};
  Interval lon{0.0, 1.0};
  Interval time{0.0, 1.0};

  /// Throws InvalidArgument when the grid is unusable.
  void validate() const;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(M) * static_cast<std::size_t>(M) *
           static_cast<std::size_t>(T);
  }
  int cells_along(Axis axis) const { return axis == Axis::Time ? T : M; }
  const Interval& range(Axis axis) const;

  /// Lower edge of cell `i` along `axis`; `edge(axis, n)` is the upper bound.
  double edge(Axis axis, int i) const;

  /// Cell index of coordinate `x`: half-open [lo, hi) except the last cell,
  /// which is closed. Returns nullopt when `x` is outside the range.
  std::optional<int> locate(Axis axis, double x) const;

  /// Same as locate() but maps out-of-range values to the boundary cell.
  int locate_clamped(Axis axis, double x) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

using SliceMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One 2-d spatial histogram. `t_index` is empty for aggregated slices.
struct Slice2D {
  SliceMatrix values;
  std::optional<int> t_index;

  int side() const { return static_cast<int>(values.rows()); }
  double sum() const { return values.sum(); }
};

/// Dense M x M x T count tensor, row-major with time outermost:
/// index(t, row, col) = (t * M + row) * M + col.
class Histogram3D {
 public:
  Histogram3D() = default;
  explicit Histogram3D(const GridSpec& grid);
  Histogram3D(const GridSpec& grid, Eigen::VectorXd counts);

  const GridSpec& grid() const { return grid_; }
  int M() const { return grid_.M; }
  int T() const { return grid_.T; }
  std::size_t size() const { return static_cast<std::size_t>(counts_.size()); }

  std::size_t index(int t, int row, int col) const {
    return (static_cast<std::size_t>(t) * grid_.M + row) * grid_.M + col;
  }

  double& operator()(int t, int row, int col) { return counts_[index(t, row, col)]; }
  double operator()(int t, int row, int col) const { return counts_[index(t, row, col)]; }

  Eigen::VectorXd& counts() { return counts_; }
  const Eigen::VectorXd& counts() const { return counts_; }

  double sum() const { return counts_.sum(); }
  bool same_shape(const Histogram3D& other) const {
    return grid_.M == other.grid_.M && grid_.T == other.grid_.T;
  }

  /// View of the slice at time `t` as an M x M row-major matrix.
  Eigen::Map<const SliceMatrix> slice_view(int t) const;
  Eigen::Map<SliceMatrix> slice_view(int t);

 private:
  GridSpec grid_;
  Eigen::VectorXd counts_;
};

enum class BoundaryMode { Strict, Clip };

Histogram3D discretize(const Dataset& dataset, const GridSpec& grid,
                       BoundaryMode mode = BoundaryMode::Strict);

enum class PadMode { Strict, ZeroPad };

/// Sums j x j blocks. In ZeroPad mode the slice is padded at the high edges
/// up to the next multiple of j.
Slice2D coarsen(const Slice2D& slice, int j, PadMode mode = PadMode::Strict);

Slice2D slice_at(const Histogram3D& hist, int t);

/// Inverse of slice_at over all t; `grid.T` must equal the slice count.
Histogram3D assemble(const std::vector<Slice2D>& slices, const GridSpec& grid);

double l1_distance(const Histogram3D& a, const Histogram3D& b);

}  // namespace vdr
