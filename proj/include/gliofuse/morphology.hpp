#pragma once

// Binary 3D morphology and connected-component labeling.

#include <array>
#include <cstdint>
#include <vector>

#include "gliofuse/volume.hpp"

namespace gliofuse {

/// Voxel neighborhood: 6 = shared face, 18 = face or edge, 26 = face, edge or
/// corner.
enum class Connectivity : int { Face = 6, Edge = 18, Vertex = 26 };

/// Throws InputError unless n is 6, 18 or 26.
Connectivity connectivity_from_int(int n);

using Offset3 = std::array<int, 3>;

/// Neighbor offsets (center excluded), ordered by z, then y, then x.
std::vector<Offset3> neighbor_offsets(Connectivity conn);

struct Components {
  Image<std::int32_t> labels;  // 0 = background, components numbered from 1
  std::vector<std::size_t> sizes;  // sizes[k] is the voxel count of component k + 1

  std::size_t count() const noexcept { return sizes.size(); }
};

/// Components are numbered in the scan order of their first voxel.
Components connected_components(const Mask& mask, Connectivity conn);

/// `iterations` rounds of dilation with the structuring element of `conn`.
/// Voxels beyond the volume edge are treated as background.
Mask dilate(const Mask& mask, int iterations, Connectivity conn);

/// Voxels of `mask` with at least one 6-neighbor outside the mask or outside
/// the volume.
std::vector<std::size_t> surface_voxel_indices(const Mask& mask);

/// Surface voxel centers in millimeters (voxel index times spacing).
std::vector<Vec3> surface_voxels(const Mask& mask);

}  // namespace gliofuse
