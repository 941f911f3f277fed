#include "vdr/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vdr {

Dataset::Dataset(std::vector<PointRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    per_user_[records_[i].user_id].push_back(i);
  }
  for (const auto& [user, idx] : per_user_) {
    k_max_ = std::max(k_max_, idx.size());
  }
}

void GridSpec::validate() const {
  if (M < 1 || T < 1) {
    throw Error(ErrorCode::InvalidArgument, "grid needs M >= 1 and T >= 1");
  }
  for (const Interval* r : {&lat, &lon, &time}) {
    if (!(std::isfinite(r->min) && std::isfinite(r->max)) || !(r->max > r->min)) {
      throw Error(ErrorCode::InvalidArgument, "grid range must satisfy max > min");
    }
  }
  const double cells = static_cast<double>(M) * M * T;
  if (cells > static_cast<double>(std::numeric_limits<std::int32_t>::max())) {
    throw Error(ErrorCode::InvalidArgument, "grid has too many cells");
  }
}

const Interval& GridSpec::range(Axis axis) const {
  switch (axis) {
    case Axis::Lat: return lat;
    case Axis::Lon: return lon;
    case Axis::Time: return time;
  }
  return time;
}

double GridSpec::edge(Axis axis, int i) const {
  const Interval& r = range(axis);
  const int n = cells_along(axis);
  if (i >= n) return r.max;
  return r.min + r.width() * static_cast<double>(i) / static_cast<double>(n);
}

std::optional<int> GridSpec::locate(Axis axis, double x) const {
  const Interval& r = range(axis);
  if (!(x >= r.min && x <= r.max)) return std::nullopt;
  const int n = cells_along(axis);
  int i = static_cast<int>(std::floor((x - r.min) / r.width() * n));
  i = std::clamp(i, 0, n - 1);
  // Snap to the exact edge definition so the floor above never disagrees
  // with edge() on values that round across a boundary.
  while (i > 0 && x < edge(axis, i)) --i;
  while (i < n - 1 && x >= edge(axis, i + 1)) ++i;
  return i;
}

int GridSpec::locate_clamped(Axis axis, double x) const {
  const Interval& r = range(axis);
  if (x < r.min) return 0;
  if (x > r.max) return cells_along(axis) - 1;
  return *locate(axis, x);
}

Histogram3D::Histogram3D(const GridSpec& grid)
    : grid_(grid), counts_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.cell_count()))) {
  grid_.validate();
}

Histogram3D::Histogram3D(const GridSpec& grid, Eigen::VectorXd counts)
    : grid_(grid), counts_(std::move(counts)) {
  grid_.validate();
  if (static_cast<std::size_t>(counts_.size()) != grid_.cell_count()) {
    throw Error(ErrorCode::ShapeMismatch, "counts length does not match grid");
  }
}

Eigen::Map<const SliceMatrix> Histogram3D::slice_view(int t) const {
  return {counts_.data() + index(t, 0, 0), grid_.M, grid_.M};
}

Eigen::Map<SliceMatrix> Histogram3D::slice_view(int t) {
  return {counts_.data() + index(t, 0, 0), grid_.M, grid_.M};
}

Histogram3D discretize(const Dataset& dataset, const GridSpec& grid, BoundaryMode mode) {
  Histogram3D hist(grid);
  const auto& records = dataset.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const PointRecord& p = records[i];
    int row, col, t;
    if (mode == BoundaryMode::Clip) {
      row = grid.locate_clamped(Axis::Lat, p.lat);
      col = grid.locate_clamped(Axis::Lon, p.lon);
      t = grid.locate_clamped(Axis::Time, p.t);
    } else {
      const auto r = grid.locate(Axis::Lat, p.lat);
      const auto c = grid.locate(Axis::Lon, p.lon);
      const auto s = grid.locate(Axis::Time, p.t);
      if (!r || !c || !s) {
        throw Error(ErrorCode::OutOfDomain, "record " + std::to_string(i) + " lies outside the grid");
      }
      row = *r;
      col = *c;
      t = *s;
    }
    hist(t, row, col) += 1.0;
  }
  return hist;
}

Slice2D coarsen(const Slice2D& slice, int j, PadMode mode) {
  if (j < 1) throw Error(ErrorCode::InvalidArgument, "aggregation factor must be positive");
  const int side = slice.side();
  if (side % j != 0 && mode == PadMode::Strict) {
    throw Error(ErrorCode::IndivisibleSide,
                "factor " + std::to_string(j) + " does not divide side " + std::to_string(side));
  }
  const int out_side = (side + j - 1) / j;
  Slice2D out;
  out.t_index = j == 1 ? slice.t_index : std::nullopt;
  out.values = SliceMatrix::Zero(out_side, out_side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      out.values(r / j, c / j) += slice.values(r, c);
    }
  }
  return out;
}

Slice2D slice_at(const Histogram3D& hist, int t) {
  if (t < 0 || t >= hist.T()) {
    throw Error(ErrorCode::BadSliceIndex, "slice " + std::to_string(t) + " out of range");
  }
  return Slice2D{hist.slice_view(t), t};
}

Histogram3D assemble(const std::vector<Slice2D>& slices, const GridSpec& grid) {
  if (static_cast<int>(slices.size()) != grid.T) {
    throw Error(ErrorCode::ShapeMismatch, "slice count does not match grid T");
  }
  Histogram3D hist(grid);
  for (int t = 0; t < grid.T; ++t) {
    const Slice2D& s = slices[static_cast<std::size_t>(t)];
    if (s.values.rows() != grid.M || s.values.cols() != grid.M) {
      throw Error(ErrorCode::ShapeMismatch, "slice " + std::to_string(t) + " has the wrong side");
    }
    hist.slice_view(t) = s.values;
  }
  return hist;
}

double l1_distance(const Histogram3D& a, const Histogram3D& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::ShapeMismatch, "histogram dims differ");
  return (a.counts() - b.counts()).cwiseAbs().sum();
}

}  // namespace vdr
