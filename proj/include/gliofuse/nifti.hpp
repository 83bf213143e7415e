#pragma once

// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//
// Supported datatypes: uint8 (2), int16 (4), float32 (16). Anything else is
// rejected with UnsupportedDtypeError. Orientation comes from the sform when
// sform_code > 0, otherwise from the qform quaternion when qform_code > 0,
// otherwise from pixdim alone. Payloads holding NaN or Inf are rejected.

#include <filesystem>

#include "gliofuse/volume.hpp"

namespace gliofuse {

Volume3D read_nifti(const std::filesystem::path& path);

/// Writes sform (code 1) and a matching qform. A ".gz" suffix selects gzip
/// compression. The file is written to a temporary sibling and renamed into
/// place, so readers never see a partial file.
void write_nifti(const Volume3D& volume, const std::filesystem::path& path);

/// 4D float volume with one channel per class along the fourth axis.
ProbStack read_prob_stack(const std::filesystem::path& path);
void write_prob_stack(const ProbStack& stack, const std::filesystem::path& path);

/// Quaternion (b, c, d), offset and qfac to affine, following the NIfTI-1
/// reference formula.
Affine quaternion_to_affine(double qb, double qc, double qd, double qx, double qy, double qz,
                            const Vec3& spacing, double qfac);

}  // namespace gliofuse
