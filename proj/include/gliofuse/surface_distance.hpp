#pragma once

#include <vector>

#include "gliofuse/volume.hpp"

namespace gliofuse {

/// Static k-d tree over 3D points for exact Euclidean nearest-neighbor
/// queries.
class PointIndex {
 public:
  explicit PointIndex(std::vector<Vec3> points);

  bool empty() const noexcept { return points_.empty(); }
  std::size_t size() const noexcept { return points_.size(); }

  /// Euclidean distance from `q` to the closest indexed point.
  double nearest_distance(const Vec3& q) const;

 private:
  void build(std::size_t lo, std::size_t hi);
  void search(std::size_t lo, std::size_t hi, const Vec3& q, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<unsigned char> split_axis_;
};

/// Percentile with linear interpolation between order statistics, `pct` in
/// [0, 100]. Throws InputError on an empty sample.
double percentile_linear(std::vector<double> values, double pct);

/// 95th percentile of the pooled directed surface distances a -> b and
/// b -> a, in millimeters. Both masks must be nonempty and share geometry.
double hd95(const Mask& a, const Mask& b);

}  // namespace gliofuse
