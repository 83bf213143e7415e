#include "gliofuse/channels.hpp"

#include <cmath>
#include <vector>

namespace gliofuse {

Volume3D subtract(const Volume3D& t1gd, const Volume3D& t1, bool clamp_negative,
                  const std::string& t1gd_name, const std::string& t1_name) {
  require_same_geometry(t1gd.geometry(), t1.geometry(), t1gd_name, t1_name);
  std::vector<float> out(t1gd.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float d = t1gd[i] - t1[i];
    out[i] = (clamp_negative && d < 0.0f) ? 0.0f : d;
  }
  return Volume3D(t1gd.geometry(), std::move(out), DType::Float32);
}

Volume3D zscore_normalize(const Volume3D& vol, const std::optional<LabelMap>& mask) {
  if (mask) require_same_geometry(vol.geometry(), mask->geometry(), "volume", "mask");
  auto selected = [&](std::size_t i) { return !mask || (*mask)[i] != 0; };

  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (selected(i)) {
      sum += vol[i];
      ++n;
    }
  }
  std::vector<float> out(vol.size(), 0.0f);
  if (n == 0) throw InputError("z-score normalization mask is empty");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < vol.size(); ++i) {
    if (selected(i)) ss += (vol[i] - mean) * (vol[i] - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd > 0.0) {
    for (std::size_t i = 0; i < vol.size(); ++i) {
      if (selected(i)) out[i] = static_cast<float>((vol[i] - mean) / sd);
    }
  }
  return Volume3D(vol.geometry(), std::move(out), DType::Float32);
}

}  // namespace gliofuse
