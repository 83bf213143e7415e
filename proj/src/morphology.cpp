#include "gliofuse/morphology.hpp"

#include <cstdlib>
#include <numeric>

namespace gliofuse {

namespace {

class DisjointSets {
 public:
  std::int32_t make() {
    parent_.push_back(static_cast<std::int32_t>(parent_.size()));
    return parent_.back();
  }

  std::int32_t find(std::int32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

 private:
  std::vector<std::int32_t> parent_;
};

bool in_bounds(const Shape3& s, long x, long y, long z) {
  return x >= 0 && y >= 0 && z >= 0 && x < static_cast<long>(s[0]) &&
         y < static_cast<long>(s[1]) && z < static_cast<long>(s[2]);
}

}  // namespace

Connectivity connectivity_from_int(int n) {
  switch (n) {
    case 6: return Connectivity::Face;
    case 18: return Connectivity::Edge;
    case 26: return Connectivity::Vertex;
    default: throw InputError("connectivity must be 6, 18 or 26, got " + std::to_string(n));
  }
}

std::vector<Offset3> neighbor_offsets(Connectivity conn) {
  const int max_nonzero = conn == Connectivity::Face ? 1 : conn == Connectivity::Edge ? 2 : 3;
  std::vector<Offset3> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nz = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (nz > 0 && nz <= max_nonzero) out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

Components connected_components(const Mask& mask, Connectivity conn) {
  const Geometry& g = mask.geometry();
  const Shape3& s = g.shape;

  // Only neighbors already visited in scan order need to be examined.
  std::vector<Offset3> backward;
  for (const auto& o : neighbor_offsets(conn)) {
    if (o[2] < 0 || (o[2] == 0 && (o[1] < 0 || (o[1] == 0 && o[0] < 0)))) backward.push_back(o);
  }

  std::vector<std::int32_t> provisional(mask.size(), -1);
  DisjointSets sets;
  for (std::size_t z = 0; z < s[2]; ++z) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t x = 0; x < s[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        if (!mask[i]) continue;
        std::int32_t label = -1;
        for (const auto& o : backward) {
          const long nx = static_cast<long>(x) + o[0];
          const long ny = static_cast<long>(y) + o[1];
          const long nz = static_cast<long>(z) + o[2];
          if (!in_bounds(s, nx, ny, nz)) continue;
          const std::int32_t other = provisional[g.index(nx, ny, nz)];
          if (other < 0) continue;
          if (label < 0) {
            label = other;
          } else {
            sets.unite(label, other);
          }
        }
        provisional[i] = label < 0 ? sets.make() : label;
      }
    }
  }

  Components out{Image<std::int32_t>(g, 0), {}};
  std::vector<std::int32_t> final_label;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (provisional[i] < 0) continue;
    const std::int32_t root = sets.find(provisional[i]);
    if (static_cast<std::size_t>(root) >= final_label.size()) final_label.resize(root + 1, 0);
    if (final_label[root] == 0) {
      out.sizes.push_back(0);
      final_label[root] = static_cast<std::int32_t>(out.sizes.size());
    }
    const std::int32_t l = final_label[root];
    out.labels[i] = l;
    ++out.sizes[l - 1];
  }
  return out;
}

Mask dilate(const Mask& mask, int iterations, Connectivity conn) {
  if (iterations < 0) throw InputError("dilation iterations must be >= 0");
  const Geometry& g = mask.geometry();
  const Shape3& s = g.shape;
  const auto offsets = neighbor_offsets(conn);

  Mask current = mask;
  for (int it = 0; it < iterations; ++it) {
    Mask next = current;
    for (std::size_t z = 0; z < s[2]; ++z) {
      for (std::size_t y = 0; y < s[1]; ++y) {
        for (std::size_t x = 0; x < s[0]; ++x) {
          if (!current[g.index(x, y, z)]) continue;
          for (const auto& o : offsets) {
            const long nx = static_cast<long>(x) + o[0];
            const long ny = static_cast<long>(y) + o[1];
            const long nz = static_cast<long>(z) + o[2];
            if (in_bounds(s, nx, ny, nz)) next[g.index(nx, ny, nz)] = 1;
          }
        }
      }
    }
    current = std::move(next);
  }
  return current;
}

std::vector<std::size_t> surface_voxel_indices(const Mask& mask) {
  const Geometry& g = mask.geometry();
  const Shape3& s = g.shape;
  const auto faces = neighbor_offsets(Connectivity::Face);
  std::vector<std::size_t> out;
  for (std::size_t z = 0; z < s[2]; ++z) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t x = 0; x < s[0]; ++x) {
        const std::size_t i = g.index(x, y, z);
        if (!mask[i]) continue;
        for (const auto& o : faces) {
          const long nx = static_cast<long>(x) + o[0];
          const long ny = static_cast<long>(y) + o[1];
          const long nz = static_cast<long>(z) + o[2];
          if (!in_bounds(s, nx, ny, nz) || !mask[g.index(nx, ny, nz)]) {
            out.push_back(i);
            break;
          }
        }
      }
    }
  }
  return out;
}

std::vector<Vec3> surface_voxels(const Mask& mask) {
  const Geometry& g = mask.geometry();
  std::vector<Vec3> out;
  for (std::size_t i : surface_voxel_indices(mask)) {
    const auto c = g.coords(i);
    out.push_back({c[0] * g.spacing[0], c[1] * g.spacing[1], c[2] * g.spacing[2]});
  }
  return out;
}

}  // namespace gliofuse
