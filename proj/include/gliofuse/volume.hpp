#pragma once

// Core voxel-grid types shared by every module.
//
// Linearization: x varies fastest, then y, then z. The linear index of voxel
// (x, y, z) is x + nx * (y + ny * z), which is also the on-disk NIfTI order.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gliofuse/error.hpp"

namespace gliofuse {

using Shape3 = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;
using Affine = std::array<std::array<double, 4>, 4>;

Affine diagonal_affine(const Vec3& spacing);

struct Geometry {
  Shape3 shape{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Affine affine = diagonal_affine({1.0, 1.0, 1.0});

  /// Geometry with a diagonal (spacing-only) affine.
  static Geometry make(const Shape3& shape, const Vec3& spacing = {1.0, 1.0, 1.0});

  std::size_t voxel_count() const noexcept { return shape[0] * shape[1] * shape[2]; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + shape[0] * (y + shape[1] * z);
  }

  std::array<std::size_t, 3> coords(std::size_t i) const noexcept {
    return {i % shape[0], (i / shape[0]) % shape[1], i / (shape[0] * shape[1])};
  }

  /// Throws GeometryError if the shape is empty, a spacing is not strictly
  /// positive, or spacing disagrees with the affine column norms by > 1e-3 mm.
  void validate() const;

  bool operator==(const Geometry&) const = default;
};

/// Describes the first differing field between two geometries, or nullopt
/// when they match (shape exact, spacing and affine within 1e-3).
std::optional<std::string> geometry_mismatch(const Geometry& a, const Geometry& b);

bool check_geometry(const Geometry& a, const Geometry& b);

/// Throws GeometryError naming both operands and the differing field.
void require_same_geometry(const Geometry& a, const Geometry& b, const std::string& name_a,
                           const std::string& name_b);

/// Dense scalar grid in x-fastest order.
template <class T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  explicit Image(Geometry geometry, T fill = T{})
      : geometry_(std::move(geometry)), data_(geometry_.voxel_count(), fill) {
    geometry_.validate();
  }

  Image(Geometry geometry, std::vector<T> data)
      : geometry_(std::move(geometry)), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.voxel_count()) {
      throw GeometryError("data length " + std::to_string(data_.size()) +
                          " does not match voxel count " +
                          std::to_string(geometry_.voxel_count()));
    }
  }

  const Geometry& geometry() const noexcept { return geometry_; }
  const Shape3& shape() const noexcept { return geometry_.shape; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t x, std::size_t y, std::size_t z) noexcept {
    return data_[geometry_.index(x, y, z)];
  }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return data_[geometry_.index(x, y, z)];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  Geometry geometry_{};
  std::vector<T> data_;
};

/// Binary mask; every voxel is 0 or 1.
using Mask = Image<std::uint8_t>;

std::size_t count_nonzero(const Mask& mask);

enum class DType { UInt8, Int16, Float32 };

const char* dtype_name(DType t);

/// Scalar volume as loaded from or written to disk. Values are held as float;
/// uint8 and int16 payloads are represented exactly.
class Volume3D : public Image<float> {
 public:
  Volume3D() = default;
  Volume3D(Geometry geometry, std::vector<float> data, DType dtype = DType::Float32);
  Volume3D(Geometry geometry, float fill, DType dtype = DType::Float32);

  DType dtype() const noexcept { return dtype_; }

 private:
  DType dtype_ = DType::Float32;
};

/// Integer code -> region name. Code 0 is always background.
class LabelEncoding {
 public:
  struct Entry {
    std::uint8_t code;
    std::string name;
    bool operator==(const Entry&) const = default;
  };

  LabelEncoding() = default;
  explicit LabelEncoding(std::vector<Entry> entries);

  /// {1: NETC, 2: SNFH, 3: ET, 4: RC}
  static LabelEncoding standard();

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::uint8_t code) const noexcept;
  std::optional<std::uint8_t> code_of(const std::string& name) const;
  const std::string& name_of(std::uint8_t code) const;

  /// "background" followed by region names in code order. Channel i of a
  /// ProbStack corresponds to class_names()[i].
  std::vector<std::string> class_names() const;
  /// Code for ProbStack channel i (0 for background).
  std::uint8_t code_of_channel(std::size_t channel) const;
  std::optional<std::size_t> channel_of_code(std::uint8_t code) const;

  bool operator==(const LabelEncoding&) const = default;

 private:
  std::vector<Entry> entries_;  // sorted by code, unique, code > 0
};

class LabelMap {
 public:
  LabelMap() = default;
  /// Validates that every code is 0 or in the encoding.
  LabelMap(Image<std::uint8_t> codes, LabelEncoding encoding = LabelEncoding::standard());

  /// Converts a loaded volume; values must be integral codes of the encoding.
  static LabelMap from_volume(const Volume3D& volume,
                              LabelEncoding encoding = LabelEncoding::standard());
  Volume3D to_volume() const;

  const Geometry& geometry() const noexcept { return codes_.geometry(); }
  const Image<std::uint8_t>& codes() const noexcept { return codes_; }
  const LabelEncoding& encoding() const noexcept { return encoding_; }
  std::size_t size() const noexcept { return codes_.size(); }
  std::uint8_t operator[](std::size_t i) const noexcept { return codes_[i]; }

  bool operator==(const LabelMap&) const = default;

 private:
  Image<std::uint8_t> codes_;
  LabelEncoding encoding_;
};

/// Per-class probability volumes, channel-major. Channel order follows
/// LabelEncoding::class_names().
class ProbStack {
 public:
  ProbStack() = default;
  /// `channels` holds channel_count * voxel_count values, channel-major.
  ProbStack(Geometry geometry, std::size_t channel_count, std::vector<float> channels);

  const Geometry& geometry() const noexcept { return geometry_; }
  std::size_t channel_count() const noexcept { return channel_count_; }
  std::size_t voxel_count() const noexcept { return geometry_.voxel_count(); }

  std::span<const float> channel(std::size_t c) const noexcept {
    return std::span<const float>(values_).subspan(c * voxel_count(), voxel_count());
  }
  float at(std::size_t c, std::size_t voxel) const noexcept {
    return values_[c * voxel_count() + voxel];
  }
  const std::vector<float>& values() const noexcept { return values_; }

  /// Throws InputError at the first voxel violating [0,1] bounds or the
  /// unit-sum constraint (tolerance `tol`).
  void validate_simplex(double tol = 1e-4) const;

  bool operator==(const ProbStack&) const = default;

 private:
  Geometry geometry_{};
  std::size_t channel_count_ = 0;
  std::vector<float> values_;
};

}  // namespace gliofuse
