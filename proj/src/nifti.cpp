#include "gliofuse/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace gliofuse {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

// Byte offsets into the 348-byte nifti_1_header.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int scl_inter = 116;
constexpr int xyzt_units = 123;
constexpr int descrip = 148;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int quatern_b = 256;
constexpr int qoffset_x = 268;
constexpr int srow_x = 280;
constexpr int magic = 344;
}  // namespace off

constexpr std::int16_t kUInt8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kFloat32 = 16;

template <class T>
T byteswap_value(T v) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

class HeaderReader {
 public:
  HeaderReader(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(int offset) const {
    T v;
    std::memcpy(&v, bytes_ + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

class HeaderWriter {
 public:
  HeaderWriter() { bytes_.fill(0); }

  template <class T>
  void put(int offset, T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
    std::memcpy(bytes_.data() + offset, &v, sizeof(T));
  }

  void put_bytes(int offset, const char* s, std::size_t n) {
    std::memcpy(bytes_.data() + offset, s, n);
  }

  const std::array<unsigned char, kDataOffset>& bytes() const { return bytes_; }

 private:
  std::array<unsigned char, kDataOffset> bytes_{};
};

struct GzFile {
  gzFile handle = nullptr;
  ~GzFile() {
    if (handle != nullptr) gzclose(handle);
  }
};

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("file not found: " + path.string());
  }
  GzFile f;
  f.handle = gzopen(path.string().c_str(), "rb");
  if (f.handle == nullptr) throw IoError("cannot open " + path.string());
  gzbuffer(f.handle, 1 << 17);
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> chunk{};
  for (;;) {
    const int n = gzread(f.handle, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int errnum = 0;
      const char* msg = gzerror(f.handle, &errnum);
      throw ParseError("data", std::string("decompression failed: ") + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  return out;
}

bool has_gz_suffix(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

void write_all_atomic(const std::filesystem::path& path, const unsigned char* header,
                      std::size_t header_len, const std::vector<unsigned char>& payload) {
  auto tmp = path;
  tmp += ".tmp";
  {
    GzFile f;
    f.handle = gzopen(tmp.string().c_str(), has_gz_suffix(path) ? "wb6" : "wbT");
    if (f.handle == nullptr) throw IoError("cannot open " + tmp.string() + " for writing");
    auto write = [&](const unsigned char* p, std::size_t n) {
      while (n > 0) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
        if (gzwrite(f.handle, p, chunk) != static_cast<int>(chunk)) {
          throw IoError("write failed: " + tmp.string());
        }
        p += chunk;
        n -= chunk;
      }
    };
    write(header, header_len);
    write(payload.data(), payload.size());
    const int rc = gzclose(f.handle);
    f.handle = nullptr;
    if (rc != Z_OK) throw IoError("close failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

struct RawImage {
  Geometry geometry;
  std::size_t frames = 1;
  DType dtype = DType::Float32;
  std::vector<float> data;  // frames * voxel_count, frame-major
};

RawImage parse(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) {
    throw ParseError("sizeof_hdr", "file holds " + std::to_string(bytes.size()) +
                                       " bytes, shorter than a 348-byte header");
  }
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != kHeaderSize) {
    if (byteswap_value(sizeof_hdr) != kHeaderSize) {
      throw ParseError("sizeof_hdr", "expected 348, found " + std::to_string(sizeof_hdr));
    }
    swap = true;
  }
  const HeaderReader h(bytes.data(), swap);

  if (std::memcmp(bytes.data() + off::magic, "n+1\0", 4) != 0) {
    throw ParseError("magic", "expected single-file NIfTI-1 magic \"n+1\"");
  }

  const auto ndim = h.get<std::int16_t>(off::dim);
  if (ndim < 1 || ndim > 7) {
    throw ParseError("dim[0]", "dimension count " + std::to_string(ndim) + " outside 1..7");
  }
  std::array<std::size_t, 7> dims{1, 1, 1, 1, 1, 1, 1};
  for (int i = 1; i <= ndim; ++i) {
    const auto d = h.get<std::int16_t>(off::dim + 2 * i);
    if (d < 1) {
      throw ParseError("dim[" + std::to_string(i) + "]",
                       "extent " + std::to_string(d) + " must be positive");
    }
    dims[i - 1] = static_cast<std::size_t>(d);
  }
  for (int i = 4; i < 7; ++i) {
    if (i >= 4 && dims[i] != 1) {
      throw ParseError("dim[" + std::to_string(i + 1) + "]", "only up to 4 dimensions supported");
    }
  }

  const auto datatype = h.get<std::int16_t>(off::datatype);
  std::size_t bytes_per_voxel = 0;
  DType dtype{};
  switch (datatype) {
    case kUInt8: bytes_per_voxel = 1; dtype = DType::UInt8; break;
    case kInt16: bytes_per_voxel = 2; dtype = DType::Int16; break;
    case kFloat32: bytes_per_voxel = 4; dtype = DType::Float32; break;
    default: throw UnsupportedDtypeError(datatype);
  }
  const auto bitpix = h.get<std::int16_t>(off::bitpix);
  if (bitpix != static_cast<std::int16_t>(8 * bytes_per_voxel)) {
    throw ParseError("bitpix", "value " + std::to_string(bitpix) + " inconsistent with datatype " +
                                   std::to_string(datatype));
  }

  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[i] = h.get<float>(off::pixdim + 4 * i);
  Vec3 spacing{};
  for (int i = 0; i < 3; ++i) {
    const float p = pixdim[i + 1];
    if (!(p > 0.0f) || !std::isfinite(p)) {
      throw ParseError("pixdim[" + std::to_string(i + 1) + "]",
                       "voxel size " + std::to_string(p) + " must be finite and > 0");
    }
    spacing[i] = p;
  }

  const float vox_offset = h.get<float>(off::vox_offset);
  if (!(vox_offset >= static_cast<float>(kDataOffset)) || vox_offset != std::floor(vox_offset)) {
    throw ParseError("vox_offset", "value " + std::to_string(vox_offset) +
                                       " must be an integer >= 352");
  }

  Geometry geom;
  geom.shape = {dims[0], dims[1], dims[2]};
  const auto sform_code = h.get<std::int16_t>(off::sform_code);
  const auto qform_code = h.get<std::int16_t>(off::qform_code);
  if (sform_code > 0) {
    Affine a{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) a[r][c] = h.get<float>(off::srow_x + 16 * r + 4 * c);
    }
    a[3][3] = 1.0;
    for (int c = 0; c < 3; ++c) {
      const double n = std::sqrt(a[0][c] * a[0][c] + a[1][c] * a[1][c] + a[2][c] * a[2][c]);
      if (!(n > 0.0) || !std::isfinite(n)) {
        throw ParseError("srow", "sform column " + std::to_string(c) + " is degenerate");
      }
      // Column norms are the physical voxel size; float32 rounding in srow is
      // absorbed here so the geometry stays self-consistent.
      spacing[c] = n;
    }
    geom.affine = a;
  } else if (qform_code > 0) {
    const double qfac = pixdim[0] < 0.0f ? -1.0 : 1.0;
    const double qb = h.get<float>(off::quatern_b);
    const double qc = h.get<float>(off::quatern_b + 4);
    const double qd = h.get<float>(off::quatern_b + 8);
    if (!std::isfinite(qb) || !std::isfinite(qc) || !std::isfinite(qd)) {
      throw ParseError("quatern_b", "quaternion parameters must be finite");
    }
    geom.affine = quaternion_to_affine(qb, qc, qd, h.get<float>(off::qoffset_x),
                                       h.get<float>(off::qoffset_x + 4),
                                       h.get<float>(off::qoffset_x + 8), spacing, qfac);
  } else {
    geom.affine = diagonal_affine(spacing);
  }
  geom.spacing = spacing;

  const std::size_t voxels = geom.voxel_count();
  const std::size_t frames = dims[3];
  const std::size_t offset = static_cast<std::size_t>(vox_offset);
  const std::size_t need = offset + voxels * frames * bytes_per_voxel;
  if (bytes.size() < need) {
    throw ParseError("data", "truncated payload: expected " + std::to_string(need) +
                                 " bytes, file holds " + std::to_string(bytes.size()));
  }

  float slope = h.get<float>(off::scl_slope);
  float inter = h.get<float>(off::scl_inter);
  if (!std::isfinite(slope) || !std::isfinite(inter)) {
    throw ParseError("scl_slope", "scaling parameters must be finite");
  }
  const bool scaled = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);

  RawImage out;
  out.frames = frames;
  out.dtype = scaled ? DType::Float32 : dtype;
  out.data.resize(voxels * frames);
  const unsigned char* src = bytes.data() + offset;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    float v = 0.0f;
    switch (dtype) {
      case DType::UInt8: v = static_cast<float>(src[i]); break;
      case DType::Int16: {
        std::int16_t s;
        std::memcpy(&s, src + 2 * i, 2);
        if (swap) s = byteswap_value(s);
        v = static_cast<float>(s);
        break;
      }
      case DType::Float32: {
        std::memcpy(&v, src + 4 * i, 4);
        if (swap) v = byteswap_value(v);
        break;
      }
    }
    if (scaled) v = static_cast<float>(static_cast<double>(slope) * v + inter);
    if (!std::isfinite(v)) {
      throw ParseError("data", "non-finite value at voxel index " + std::to_string(i));
    }
    out.data[i] = v;
  }
  try {
    geom.validate();
  } catch (const GeometryError& e) {
    throw ParseError("pixdim", e.what());
  }
  out.geometry = geom;
  return out;
}

struct Quaternion {
  double b, c, d, qfac;
};

Quaternion affine_to_quaternion(const Affine& a, const Vec3& spacing) {
  double r[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r[i][j] = a[i][j] / spacing[j];
  }
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  double qfac = 1.0;
  if (det < 0.0) {
    qfac = -1.0;
    for (auto& row : r) row[2] = -row[2];
  }
  double qa = r[0][0] + r[1][1] + r[2][2] + 1.0;
  double qb, qc, qd;
  if (qa > 0.5) {
    qa = 0.5 * std::sqrt(qa);
    qb = 0.25 * (r[2][1] - r[1][2]) / qa;
    qc = 0.25 * (r[0][2] - r[2][0]) / qa;
    qd = 0.25 * (r[1][0] - r[0][1]) / qa;
  } else {
    const double xd = 1.0 + r[0][0] - (r[1][1] + r[2][2]);
    const double yd = 1.0 + r[1][1] - (r[0][0] + r[2][2]);
    const double zd = 1.0 + r[2][2] - (r[0][0] + r[1][1]);
    if (xd > 1.0) {
      qb = 0.5 * std::sqrt(xd);
      qc = 0.25 * (r[0][1] + r[1][0]) / qb;
      qd = 0.25 * (r[0][2] + r[2][0]) / qb;
      qa = 0.25 * (r[2][1] - r[1][2]) / qb;
    } else if (yd > 1.0) {
      qc = 0.5 * std::sqrt(yd);
      qb = 0.25 * (r[0][1] + r[1][0]) / qc;
      qd = 0.25 * (r[1][2] + r[2][1]) / qc;
      qa = 0.25 * (r[0][2] - r[2][0]) / qc;
    } else {
      qd = 0.5 * std::sqrt(zd);
      qb = 0.25 * (r[0][2] + r[2][0]) / qd;
      qc = 0.25 * (r[1][2] + r[2][1]) / qd;
      qa = 0.25 * (r[1][0] - r[0][1]) / qd;
    }
    if (qa < 0.0) {
      qb = -qb;
      qc = -qc;
      qd = -qd;
    }
  }
  return {qb, qc, qd, qfac};
}

HeaderWriter make_header(const Geometry& g, std::size_t frames, DType dtype) {
  for (int i = 0; i < 3; ++i) {
    if (g.shape[i] > 32767) throw InputError("NIfTI-1 extents are limited to 32767");
  }
  if (frames > 32767) throw InputError("NIfTI-1 extents are limited to 32767");

  HeaderWriter w;
  w.put<std::int32_t>(off::sizeof_hdr, kHeaderSize);
  w.put<std::int16_t>(off::dim, frames > 1 ? 4 : 3);
  for (int i = 0; i < 3; ++i) w.put<std::int16_t>(off::dim + 2 * (i + 1), g.shape[i]);
  w.put<std::int16_t>(off::dim + 8, static_cast<std::int16_t>(frames));
  for (int i = 5; i < 8; ++i) w.put<std::int16_t>(off::dim + 2 * i, 1);

  std::int16_t code = kFloat32;
  std::int16_t bitpix = 32;
  if (dtype == DType::UInt8) {
    code = kUInt8;
    bitpix = 8;
  } else if (dtype == DType::Int16) {
    code = kInt16;
    bitpix = 16;
  }
  w.put<std::int16_t>(off::datatype, code);
  w.put<std::int16_t>(off::bitpix, bitpix);

  const Quaternion q = affine_to_quaternion(g.affine, g.spacing);
  w.put<float>(off::pixdim, static_cast<float>(q.qfac));
  for (int i = 0; i < 3; ++i) w.put<float>(off::pixdim + 4 * (i + 1), static_cast<float>(g.spacing[i]));
  w.put<float>(off::pixdim + 16, 1.0f);
  w.put<float>(off::vox_offset, static_cast<float>(kDataOffset));
  w.put<float>(off::scl_slope, 1.0f);
  w.put<float>(off::scl_inter, 0.0f);
  w.put<std::uint8_t>(off::xyzt_units, 2);  // mm
  w.put_bytes(off::descrip, "gliofuse", 8);
  w.put<std::int16_t>(off::qform_code, 1);
  w.put<std::int16_t>(off::sform_code, 1);
  w.put<float>(off::quatern_b, static_cast<float>(q.b));
  w.put<float>(off::quatern_b + 4, static_cast<float>(q.c));
  w.put<float>(off::quatern_b + 8, static_cast<float>(q.d));
  for (int i = 0; i < 3; ++i) w.put<float>(off::qoffset_x + 4 * i, static_cast<float>(g.affine[i][3]));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      w.put<float>(off::srow_x + 16 * r + 4 * c, static_cast<float>(g.affine[r][c]));
    }
  }
  w.put_bytes(off::magic, "n+1\0", 4);
  return w;
}

std::vector<unsigned char> encode_payload(std::span<const float> values, DType dtype) {
  std::vector<unsigned char> out;
  switch (dtype) {
    case DType::UInt8: {
      out.resize(values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = values[i];
        if (!(v >= 0.0f && v <= 255.0f) || v != std::floor(v)) {
          throw InputError("value " + std::to_string(v) + " at voxel index " + std::to_string(i) +
                           " is not representable as uint8");
        }
        out[i] = static_cast<unsigned char>(v);
      }
      break;
    }
    case DType::Int16: {
      out.resize(2 * values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = values[i];
        if (!(v >= -32768.0f && v <= 32767.0f) || v != std::floor(v)) {
          throw InputError("value " + std::to_string(v) + " at voxel index " + std::to_string(i) +
                           " is not representable as int16");
        }
        auto s = static_cast<std::int16_t>(v);
        if constexpr (std::endian::native == std::endian::big) s = byteswap_value(s);
        std::memcpy(out.data() + 2 * i, &s, 2);
      }
      break;
    }
    case DType::Float32: {
      out.resize(4 * values.size());
      for (std::size_t i = 0; i < values.size(); ++i) {
        float v = values[i];
        if (!std::isfinite(v)) {
          throw InputError("non-finite value at voxel index " + std::to_string(i));
        }
        if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
        std::memcpy(out.data() + 4 * i, &v, 4);
      }
      break;
    }
  }
  return out;
}

}  // namespace

Affine quaternion_to_affine(double qb, double qc, double qd, double qx, double qy, double qz,
                            const Vec3& spacing, double qfac) {
  double qa = 1.0 - (qb * qb + qc * qc + qd * qd);
  if (qa < 1e-7) {
    // Degenerate: 180 degree rotation, renormalize (b, c, d).
    const double n = 1.0 / std::sqrt(qb * qb + qc * qc + qd * qd);
    qb *= n;
    qc *= n;
    qd *= n;
    qa = 0.0;
  } else {
    qa = std::sqrt(qa);
  }
  const double xd = spacing[0];
  const double yd = spacing[1];
  const double zd = qfac < 0.0 ? -spacing[2] : spacing[2];

  Affine m{};
  m[0][0] = (qa * qa + qb * qb - qc * qc - qd * qd) * xd;
  m[0][1] = 2.0 * (qb * qc - qa * qd) * yd;
  m[0][2] = 2.0 * (qb * qd + qa * qc) * zd;
  m[1][0] = 2.0 * (qb * qc + qa * qd) * xd;
  m[1][1] = (qa * qa + qc * qc - qb * qb - qd * qd) * yd;
  m[1][2] = 2.0 * (qc * qd - qa * qb) * zd;
  m[2][0] = 2.0 * (qb * qd - qa * qc) * xd;
  m[2][1] = 2.0 * (qc * qd + qa * qb) * yd;
  m[2][2] = (qa * qa + qd * qd - qc * qc - qb * qb) * zd;
  m[0][3] = qx;
  m[1][3] = qy;
  m[2][3] = qz;
  m[3][3] = 1.0;
  return m;
}

Volume3D read_nifti(const std::filesystem::path& path) {
  RawImage raw;
  try {
    raw = parse(read_all(path));
  } catch (const ParseError& e) {
    throw ParseError(e.field(), path.string() + ": " + e.detail());
  }
  if (raw.frames != 1) {
    throw ParseError("dim[4]", path.string() + ": expected a 3D volume, found " +
                                   std::to_string(raw.frames) + " frames");
  }
  return Volume3D(raw.geometry, std::move(raw.data), raw.dtype);
}

void write_nifti(const Volume3D& volume, const std::filesystem::path& path) {
  const HeaderWriter header = make_header(volume.geometry(), 1, volume.dtype());
  const auto payload = encode_payload(volume.data(), volume.dtype());
  write_all_atomic(path, header.bytes().data(), header.bytes().size(), payload);
}

ProbStack read_prob_stack(const std::filesystem::path& path) {
  RawImage raw;
  try {
    raw = parse(read_all(path));
  } catch (const ParseError& e) {
    throw ParseError(e.field(), path.string() + ": " + e.detail());
  }
  return ProbStack(raw.geometry, raw.frames, std::move(raw.data));
}

void write_prob_stack(const ProbStack& stack, const std::filesystem::path& path) {
  const HeaderWriter header = make_header(stack.geometry(), stack.channel_count(), DType::Float32);
  const auto payload = encode_payload(stack.values(), DType::Float32);
  write_all_atomic(path, header.bytes().data(), header.bytes().size(), payload);
}

}  // namespace gliofuse
