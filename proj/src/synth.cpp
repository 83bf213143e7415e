#include "gliofuse/synth.hpp"

#include <algorithm>
#include <cmath>

#include "gliofuse/random.hpp"

namespace gliofuse {

LabelMap make_phantom(const Shape3& shape, const Vec3& spacing, const std::vector<Blob>& blobs,
                      const LabelEncoding& encoding) {
  const Geometry g = Geometry::make(shape, spacing);
  Image<std::uint8_t> codes(g, std::uint8_t{0});
  for (const auto& b : blobs) {
    if (!encoding.contains(b.label)) {
      throw InputError("blob label " + std::to_string(b.label) + " is not in the encoding");
    }
    for (int k = 0; k < 3; ++k) {
      if (b.center[k] < 0.0 || b.center[k] > static_cast<double>(shape[k] - 1)) {
        throw InputError("blob center lies outside the volume");
      }
    }
    if (b.radius < 0.0) throw InputError("blob radius must be >= 0");
    const double r2 = b.radius * b.radius;
    std::array<std::size_t, 3> lo{}, hi{};
    for (int k = 0; k < 3; ++k) {
      lo[k] = static_cast<std::size_t>(std::max(0.0, std::ceil(b.center[k] - b.radius)));
      hi[k] = static_cast<std::size_t>(
          std::min(static_cast<double>(shape[k] - 1), std::floor(b.center[k] + b.radius)));
    }
    for (std::size_t z = lo[2]; z <= hi[2]; ++z) {
      for (std::size_t y = lo[1]; y <= hi[1]; ++y) {
        for (std::size_t x = lo[0]; x <= hi[0]; ++x) {
          const double dx = x - b.center[0];
          const double dy = y - b.center[1];
          const double dz = z - b.center[2];
          if (dx * dx + dy * dy + dz * dz <= r2) codes.at(x, y, z) = b.label;
        }
      }
    }
  }
  return LabelMap(std::move(codes), encoding);
}

Mask simulate_rater(const Mask& truth, const RaterModel& model) {
  Rng rng(split_seed(model.seed, 0));
  Mask out(truth.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double u = uniform01(rng);
    out[i] = truth[i] ? (u < model.sensitivity ? 1 : 0) : (u < 1.0 - model.specificity ? 1 : 0);
  }
  return out;
}

LabelMap simulate_label_rater(const LabelMap& truth, const RaterModel& model) {
  Rng rng(split_seed(model.seed, 0));
  const auto& entries = truth.encoding().entries();
  Image<std::uint8_t> codes(truth.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double u = uniform01(rng);
    if (truth[i] != 0) {
      codes[i] = u < model.sensitivity ? truth[i] : 0;
    } else if (u < 1.0 - model.specificity && !entries.empty()) {
      const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(entries.size()));
      codes[i] = entries[std::min(k, entries.size() - 1)].code;
    }
  }
  return LabelMap(std::move(codes), truth.encoding());
}

ProbStack soften(const LabelMap& labels, double confidence) {
  const std::size_t nc = labels.encoding().size() + 1;
  const std::size_t n = labels.size();
  const float hit = static_cast<float>(confidence);
  const float miss = nc > 1 ? static_cast<float>((1.0 - confidence) / static_cast<double>(nc - 1)) : 0.0f;
  std::vector<float> values(nc * n, miss);
  for (std::size_t i = 0; i < n; ++i) {
    values[*labels.encoding().channel_of_code(labels[i]) * n + i] = hit;
  }
  return ProbStack(labels.geometry(), nc, std::move(values));
}

ProbStack random_probstack(const Geometry& geometry, std::size_t channels, std::uint64_t seed) {
  Rng rng(split_seed(seed, 0));
  const std::size_t n = geometry.voxel_count();
  std::vector<float> values(channels * n);
  std::vector<double> draw(channels);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto& d : draw) {
      d = -std::log(1.0 - uniform01(rng));
      sum += d;
    }
    for (std::size_t c = 0; c < channels; ++c) values[c * n + i] = static_cast<float>(draw[c] / sum);
  }
  return ProbStack(geometry, channels, std::move(values));
}

LabelMap two_blob_phantom(const Shape3& shape) {
  const double s = static_cast<double>(std::min({shape[0], shape[1], shape[2]}));
  const std::vector<Blob> blobs = {
      {{shape[0] * 0.33, shape[1] * 0.4, shape[2] * 0.5}, s * 0.18, 3},
      {{shape[0] * 0.68, shape[1] * 0.6, shape[2] * 0.5}, s * 0.14, 2},
  };
  return make_phantom(shape, {1.0, 1.0, 1.0}, blobs);
}

}  // namespace gliofuse
