#pragma once

#include <optional>
#include <string>

#include "gliofuse/volume.hpp"

namespace gliofuse {

/// Voxelwise t1gd - t1 (the contrast-enhancement channel). With
/// `clamp_negative`, negative differences become 0. The names are used only in
/// the geometry-mismatch error message.
Volume3D subtract(const Volume3D& t1gd, const Volume3D& t1, bool clamp_negative = false,
                  const std::string& t1gd_name = "t1gd", const std::string& t1_name = "t1");

/// Z-score normalization with population (1/N) standard deviation. Statistics
/// are taken over voxels with a nonzero mask code, or over every voxel when no
/// mask is given. Voxels outside the mask are written as 0.
/// A constant region (std == 0) maps to all zeros.
Volume3D zscore_normalize(const Volume3D& vol, const std::optional<LabelMap>& mask = std::nullopt);

}  // namespace gliofuse
