#include "gliofuse/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gliofuse {

namespace {

constexpr double kGeometryTol = 1e-3;

std::string vec_str(const Vec3& v) {
  std::ostringstream os;
  os << "(" << v[0] << ", " << v[1] << ", " << v[2] << ")";
  return os.str();
}

}  // namespace

Affine diagonal_affine(const Vec3& spacing) {
  Affine a{};
  for (int i = 0; i < 3; ++i) a[i][i] = spacing[i];
  a[3][3] = 1.0;
  return a;
}

Geometry Geometry::make(const Shape3& shape, const Vec3& spacing) {
  Geometry g;
  g.shape = shape;
  g.spacing = spacing;
  g.affine = diagonal_affine(spacing);
  return g;
}

void Geometry::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (shape[i] == 0) {
      throw GeometryError("shape[" + std::to_string(i) + "] must be positive");
    }
    if (!(spacing[i] > 0.0) || !std::isfinite(spacing[i])) {
      throw GeometryError("spacing[" + std::to_string(i) + "] must be finite and > 0");
    }
    const double norm = std::sqrt(affine[0][i] * affine[0][i] + affine[1][i] * affine[1][i] +
                                  affine[2][i] * affine[2][i]);
    if (std::abs(norm - spacing[i]) > kGeometryTol) {
      std::ostringstream os;
      os << "spacing[" << i << "]=" << spacing[i] << " disagrees with affine column norm "
         << norm;
      throw GeometryError(os.str());
    }
  }
}

std::optional<std::string> geometry_mismatch(const Geometry& a, const Geometry& b) {
  if (a.shape != b.shape) {
    std::ostringstream os;
    os << "shape (" << a.shape[0] << "," << a.shape[1] << "," << a.shape[2] << ") vs ("
       << b.shape[0] << "," << b.shape[1] << "," << b.shape[2] << ")";
    return os.str();
  }
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.spacing[i] - b.spacing[i]) > kGeometryTol) {
      return "spacing " + vec_str(a.spacing) + " vs " + vec_str(b.spacing);
    }
  }
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (std::abs(a.affine[r][c] - b.affine[r][c]) > kGeometryTol) {
        std::ostringstream os;
        os << "affine[" << r << "][" << c << "] " << a.affine[r][c] << " vs " << b.affine[r][c];
        return os.str();
      }
    }
  }
  return std::nullopt;
}

bool check_geometry(const Geometry& a, const Geometry& b) {
  return !geometry_mismatch(a, b).has_value();
}

void require_same_geometry(const Geometry& a, const Geometry& b, const std::string& name_a,
                           const std::string& name_b) {
  if (auto diff = geometry_mismatch(a, b)) {
    throw GeometryError("geometry mismatch between " + name_a + " and " + name_b + ": " + *diff);
  }
}

std::size_t count_nonzero(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](auto v) { return v != 0; }));
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::UInt8: return "uint8";
    case DType::Int16: return "int16";
    case DType::Float32: return "float32";
  }
  return "?";
}

Volume3D::Volume3D(Geometry geometry, std::vector<float> data, DType dtype)
    : Image<float>(std::move(geometry), std::move(data)), dtype_(dtype) {}

Volume3D::Volume3D(Geometry geometry, float fill, DType dtype)
    : Image<float>(std::move(geometry), fill), dtype_(dtype) {}

// ---------------------------------------------------------------------------

LabelEncoding::LabelEncoding(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.code < b.code; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].code == 0) throw InputError("label code 0 is reserved for background");
    if (entries_[i].name.empty() || entries_[i].name == "background") {
      throw InputError("invalid region name for code " + std::to_string(entries_[i].code));
    }
    if (i > 0 && entries_[i].code == entries_[i - 1].code) {
      throw InputError("duplicate label code " + std::to_string(entries_[i].code));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[j].name == entries_[i].name) {
        throw InputError("duplicate region name " + entries_[i].name);
      }
    }
  }
}

LabelEncoding LabelEncoding::standard() {
  return LabelEncoding({{1, "NETC"}, {2, "SNFH"}, {3, "ET"}, {4, "RC"}});
}

bool LabelEncoding::contains(std::uint8_t code) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [code](const Entry& e) { return e.code == code; });
}

std::optional<std::uint8_t> LabelEncoding::code_of(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.code;
  }
  return std::nullopt;
}

const std::string& LabelEncoding::name_of(std::uint8_t code) const {
  for (const auto& e : entries_) {
    if (e.code == code) return e.name;
  }
  throw InputError("label code " + std::to_string(code) + " is not in the encoding");
}

std::vector<std::string> LabelEncoding::class_names() const {
  std::vector<std::string> names{"background"};
  for (const auto& e : entries_) names.push_back(e.name);
  return names;
}

std::uint8_t LabelEncoding::code_of_channel(std::size_t channel) const {
  if (channel == 0) return 0;
  if (channel > entries_.size()) {
    throw InputError("channel " + std::to_string(channel) + " has no class in the encoding");
  }
  return entries_[channel - 1].code;
}

std::optional<std::size_t> LabelEncoding::channel_of_code(std::uint8_t code) const {
  if (code == 0) return 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].code == code) return i + 1;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

LabelMap::LabelMap(Image<std::uint8_t> codes, LabelEncoding encoding)
    : codes_(std::move(codes)), encoding_(std::move(encoding)) {
  std::array<bool, 256> valid{};
  valid[0] = true;
  for (const auto& e : encoding_.entries()) valid[e.code] = true;
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (!valid[codes_[i]]) {
      throw InputError("label code " + std::to_string(codes_[i]) + " at voxel index " +
                       std::to_string(i) + " is not in the encoding");
    }
  }
}

LabelMap LabelMap::from_volume(const Volume3D& volume, LabelEncoding encoding) {
  std::vector<std::uint8_t> codes(volume.size());
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const float v = volume[i];
    if (v < 0.0f || v > 255.0f || v != std::floor(v)) {
      throw InputError("voxel index " + std::to_string(i) + " holds " + std::to_string(v) +
                       ", which is not a label code");
    }
    codes[i] = static_cast<std::uint8_t>(v);
  }
  return LabelMap(Image<std::uint8_t>(volume.geometry(), std::move(codes)), std::move(encoding));
}

Volume3D LabelMap::to_volume() const {
  std::vector<float> data(codes_.values().begin(), codes_.values().end());
  return Volume3D(codes_.geometry(), std::move(data), DType::UInt8);
}

// ---------------------------------------------------------------------------

ProbStack::ProbStack(Geometry geometry, std::size_t channel_count, std::vector<float> channels)
    : geometry_(std::move(geometry)), channel_count_(channel_count), values_(std::move(channels)) {
  geometry_.validate();
  if (channel_count_ == 0) throw InputError("probability stack needs at least one channel");
  if (values_.size() != channel_count_ * geometry_.voxel_count()) {
    throw GeometryError("probability stack holds " + std::to_string(values_.size()) +
                        " values, expected " +
                        std::to_string(channel_count_ * geometry_.voxel_count()));
  }
}

void ProbStack::validate_simplex(double tol) const {
  const std::size_t n = voxel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channel_count_; ++c) {
      const float v = values_[c * n + i];
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw InputError("probability " + std::to_string(v) + " outside [0,1] at voxel " +
                         std::to_string(i) + ", channel " + std::to_string(c));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw InputError("probabilities at voxel " + std::to_string(i) + " sum to " +
                       std::to_string(sum));
    }
  }
}

}  // namespace gliofuse
