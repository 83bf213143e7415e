#pragma once

// Synthetic phantoms and raters with known ground truth.
//
// Raters follow the STAPLE generative model with voxelwise independent noise:
// a foreground voxel is kept with probability p*, a background voxel is
// flipped to foreground with probability 1 - q*.

#include <cstdint>
#include <vector>

#include "gliofuse/volume.hpp"

namespace gliofuse {

struct Blob {
  std::array<double, 3> center{};  // voxel coordinates
  double radius = 0.0;             // voxels
  std::uint8_t label = 1;
};

/// Spherical blobs (|v - center| <= radius, in voxel units); later blobs
/// overwrite earlier ones. Centers must lie inside the volume and labels must
/// belong to the encoding.
LabelMap make_phantom(const Shape3& shape, const Vec3& spacing, const std::vector<Blob>& blobs,
                      const LabelEncoding& encoding = LabelEncoding::standard());

struct RaterModel {
  double sensitivity = 1.0;  // p*
  double specificity = 1.0;  // q*
  std::uint64_t seed = 0;
};

Mask simulate_rater(const Mask& truth, const RaterModel& model);

/// Label-map rater: a foreground voxel keeps its label with probability p*,
/// else becomes background; a background voxel becomes a uniformly chosen
/// foreground label with probability 1 - q*.
LabelMap simulate_label_rater(const LabelMap& truth, const RaterModel& model);

/// Soft prediction: the labeled class receives `confidence`, the remaining
/// mass is spread evenly over the other classes.
ProbStack soften(const LabelMap& labels, double confidence);

/// Random soft prediction with voxelwise Dirichlet(1) class probabilities.
ProbStack random_probstack(const Geometry& geometry, std::size_t channels, std::uint64_t seed);

/// Two-blob phantom used by the parameter-recovery checks: an ET ball and an
/// SNFH ball on the given grid.
LabelMap two_blob_phantom(const Shape3& shape);

}  // namespace gliofuse
