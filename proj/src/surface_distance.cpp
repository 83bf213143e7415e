#include "gliofuse/surface_distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gliofuse/morphology.hpp"

namespace gliofuse {

PointIndex::PointIndex(std::vector<Vec3> points)
    : points_(std::move(points)), split_axis_(points_.size(), 0) {
  build(0, points_.size());
}

void PointIndex::build(std::size_t lo, std::size_t hi) {
  if (hi - lo <= 1) return;
  Vec3 min_c{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
             std::numeric_limits<double>::max()};
  Vec3 max_c{std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest(),
             std::numeric_limits<double>::lowest()};
  for (std::size_t i = lo; i < hi; ++i) {
    for (int k = 0; k < 3; ++k) {
      min_c[k] = std::min(min_c[k], points_[i][k]);
      max_c[k] = std::max(max_c[k], points_[i][k]);
    }
  }
  unsigned char axis = 0;
  for (unsigned char k = 1; k < 3; ++k) {
    if (max_c[k] - min_c[k] > max_c[axis] - min_c[axis]) axis = k;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(points_.begin() + lo, points_.begin() + mid, points_.begin() + hi,
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  split_axis_[mid] = axis;
  build(lo, mid);
  build(mid + 1, hi);
}

void PointIndex::search(std::size_t lo, std::size_t hi, const Vec3& q, double& best_sq) const {
  if (lo >= hi) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  const Vec3& p = points_[mid];
  const double dx = q[0] - p[0];
  const double dy = q[1] - p[1];
  const double dz = q[2] - p[2];
  best_sq = std::min(best_sq, dx * dx + dy * dy + dz * dz);
  if (hi - lo == 1) return;
  const unsigned char axis = split_axis_[mid];
  const double diff = q[axis] - p[axis];
  if (diff < 0.0) {
    search(lo, mid, q, best_sq);
    if (diff * diff < best_sq) search(mid + 1, hi, q, best_sq);
  } else {
    search(mid + 1, hi, q, best_sq);
    if (diff * diff < best_sq) search(lo, mid, q, best_sq);
  }
}

double PointIndex::nearest_distance(const Vec3& q) const {
  if (points_.empty()) throw InputError("nearest-neighbor query on an empty point set");
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, points_.size(), q, best_sq);
  return std::sqrt(best_sq);
}

double percentile_linear(std::vector<double> values, double pct) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lower);
  std::nth_element(values.begin(), values.begin() + lower, values.end());
  const double lo = values[lower];
  if (frac == 0.0 || lower + 1 >= values.size()) return lo;
  const double hi = *std::min_element(values.begin() + lower + 1, values.end());
  return lo + frac * (hi - lo);
}

double hd95(const Mask& a, const Mask& b) {
  require_same_geometry(a.geometry(), b.geometry(), "first mask", "second mask");
  auto sa = surface_voxels(a);
  auto sb = surface_voxels(b);
  if (sa.empty() || sb.empty()) throw InputError("hd95 requires two nonempty masks");

  std::vector<double> distances;
  distances.reserve(sa.size() + sb.size());
  const PointIndex index_b(sb);
  for (const auto& p : sa) distances.push_back(index_b.nearest_distance(p));
  const PointIndex index_a(std::move(sa));
  for (const auto& p : sb) distances.push_back(index_a.nearest_distance(p));
  return percentile_linear(std::move(distances), 95.0);
}

}  // namespace gliofuse
