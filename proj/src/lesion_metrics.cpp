#include "gliofuse/lesion_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gliofuse/morphology.hpp"
#include "gliofuse/surface_distance.hpp"

namespace gliofuse {

namespace {

struct Box {
  std::array<std::size_t, 3> lo{};
  std::array<std::size_t, 3> hi{};  // exclusive
};

Box padded_bounds(const Geometry& g, const std::vector<std::size_t>& a,
                  const std::vector<std::size_t>& b) {
  Box box;
  box.lo = {g.shape[0], g.shape[1], g.shape[2]};
  box.hi = {0, 0, 0};
  auto extend = [&](const std::vector<std::size_t>& voxels) {
    for (std::size_t i : voxels) {
      const auto c = g.coords(i);
      for (int k = 0; k < 3; ++k) {
        box.lo[k] = std::min(box.lo[k], c[k]);
        box.hi[k] = std::max(box.hi[k], c[k] + 1);
      }
    }
  };
  extend(a);
  extend(b);
  for (int k = 0; k < 3; ++k) {
    box.lo[k] = box.lo[k] > 0 ? box.lo[k] - 1 : 0;
    box.hi[k] = std::min(box.hi[k] + 1, g.shape[k]);
  }
  return box;
}

// Mask over `box` holding the given voxels. One voxel of padding is kept
// wherever the volume allows, so surface classification matches the full grid.
Mask crop_mask(const Geometry& g, const Box& box, const std::vector<std::size_t>& voxels) {
  const Geometry cg = Geometry::make(
      {box.hi[0] - box.lo[0], box.hi[1] - box.lo[1], box.hi[2] - box.lo[2]}, g.spacing);
  Mask out(cg, std::uint8_t{0});
  for (std::size_t i : voxels) {
    const auto c = g.coords(i);
    out.at(c[0] - box.lo[0], c[1] - box.lo[1], c[2] - box.lo[2]) = 1;
  }
  return out;
}

}  // namespace

void MetricConfig::validate() const {
  connectivity_from_int(connectivity);
  if (dilation_iterations < 0) throw InputError("dilation_iterations must be >= 0");
  if (!(fp_hd95_penalty >= 0.0)) throw InputError("fp_hd95_penalty must be >= 0");
  if (!(fp_dice_score >= 0.0 && fp_dice_score <= 1.0)) {
    throw InputError("fp_dice_score must lie in [0, 1]");
  }
}

double dice(const Mask& a, const Mask& b) {
  require_same_geometry(a.geometry(), b.geometry(), "first mask", "second mask");
  std::size_t na = 0, nb = 0, inter = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    na += x;
    nb += y;
    inter += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

LesionScores lesionwise_scores(const Mask& gt, const Mask& pred, const MetricConfig& cfg) {
  require_same_geometry(gt.geometry(), pred.geometry(), "ground truth", "prediction");
  cfg.validate();
  const Connectivity conn = connectivity_from_int(cfg.connectivity);
  const Geometry& g = gt.geometry();

  const Mask dilated = dilate(gt, cfg.dilation_iterations, conn);
  const Components gt_cc = connected_components(dilated, conn);
  const Components pred_cc = connected_components(pred, conn);

  // Undilated GT voxels per dilated component, and voxels per predicted component.
  std::vector<std::vector<std::size_t>> lesion_voxels(gt_cc.count());
  std::vector<std::vector<std::size_t>> pred_voxels(pred_cc.count());
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (gt[i]) lesion_voxels[gt_cc.labels[i] - 1].push_back(i);
    if (pred[i]) pred_voxels[pred_cc.labels[i] - 1].push_back(i);
  }

  std::vector<bool> survives(gt_cc.count());
  for (std::size_t k = 0; k < gt_cc.count(); ++k) {
    survives[k] = !lesion_voxels[k].empty() && lesion_voxels[k].size() >= cfg.min_lesion_voxels;
  }

  // assigned[k] lists predicted components touching dilated lesion k.
  std::vector<std::vector<int>> assigned(gt_cc.count());
  std::vector<bool> pred_matched(pred_cc.count(), false);
  for (std::size_t m = 0; m < pred_cc.count(); ++m) {
    for (std::size_t i : pred_voxels[m]) {
      const std::int32_t l = gt_cc.labels[i];
      if (l == 0 || !survives[l - 1]) continue;
      auto& list = assigned[l - 1];
      if (list.empty() || list.back() != static_cast<int>(m + 1)) {
        if (std::find(list.begin(), list.end(), static_cast<int>(m + 1)) == list.end()) {
          list.push_back(static_cast<int>(m + 1));
        }
      }
      pred_matched[m] = true;
    }
  }

  LesionScores out;
  double dice_sum = 0.0;
  double hd_sum = 0.0;
  for (std::size_t k = 0; k < gt_cc.count(); ++k) {
    if (!survives[k]) continue;
    LesionMatch match;
    match.gt_lesion_id = static_cast<int>(k + 1);
    match.pred_component_ids = assigned[k];
    std::sort(match.pred_component_ids.begin(), match.pred_component_ids.end());
    match.gt_volume_voxels = lesion_voxels[k].size();

    std::vector<std::size_t> union_voxels;
    for (int m : match.pred_component_ids) {
      union_voxels.insert(union_voxels.end(), pred_voxels[m - 1].begin(), pred_voxels[m - 1].end());
    }
    match.pred_volume_voxels = union_voxels.size();

    if (union_voxels.empty()) {
      match.dice = 0.0;
      match.hd95 = cfg.fp_hd95_penalty;
    } else {
      const Box box = padded_bounds(g, lesion_voxels[k], union_voxels);
      const Mask a = crop_mask(g, box, lesion_voxels[k]);
      const Mask b = crop_mask(g, box, union_voxels);
      match.dice = dice(a, b);
      match.hd95 = std::min(hd95(a, b), cfg.fp_hd95_penalty);
    }
    dice_sum += match.dice;
    hd_sum += match.hd95;
    out.lesions.push_back(std::move(match));
  }

  for (std::size_t m = 0; m < pred_cc.count(); ++m) {
    if (!pred_matched[m] && pred_cc.sizes[m] >= cfg.min_lesion_voxels) ++out.fp_count;
  }

  const std::size_t n = out.lesions.size() + out.fp_count;
  if (n == 0) {
    out.ld = cfg.empty_empty_ld;
    out.lh95 = cfg.empty_empty_lh95;
    return out;
  }
  dice_sum += static_cast<double>(out.fp_count) * cfg.fp_dice_score;
  hd_sum += static_cast<double>(out.fp_count) * cfg.fp_hd95_penalty;
  out.ld = dice_sum / static_cast<double>(n);
  out.lh95 = hd_sum / static_cast<double>(n);
  return out;
}

CaseMetrics evaluate_case(const LabelMap& gt, const LabelMap& pred, const MetricConfig& cfg,
                          const RegionDefinitions& defs, const std::string& case_id) {
  require_same_geometry(gt.geometry(), pred.geometry(), "ground truth", "prediction");
  if (!(gt.encoding() == pred.encoding())) {
    throw InputError("ground truth and prediction use different label encodings");
  }
  CaseMetrics out;
  out.case_id = case_id;
  for (const auto& region : kReportRegions) {
    out.regions[region] =
        lesionwise_scores(binarize(gt, region, defs), binarize(pred, region, defs), cfg);
  }
  return out;
}

}  // namespace gliofuse
