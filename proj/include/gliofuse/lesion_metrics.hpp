#pragma once

// Lesion-wise Dice (LD) and lesion-wise Hausdorff95 (LH95).
//
// Ground-truth lesions are the connected components of the dilated GT mask
// that keep at least `min_lesion_voxels` undilated GT voxels. Every predicted
// component touching a lesion's dilated extent is assigned to it; each lesion
// is scored against the union of its assigned components. Unassigned
// predicted components of sufficient size are false positives.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gliofuse/regions.hpp"
#include "gliofuse/volume.hpp"

namespace gliofuse {

struct MetricConfig {
  int connectivity = 26;
  int dilation_iterations = 3;
  std::size_t min_lesion_voxels = 50;
  double fp_hd95_penalty = 374.0;
  double fp_dice_score = 0.0;
  double empty_empty_ld = 1.0;
  double empty_empty_lh95 = 0.0;

  void validate() const;
  bool operator==(const MetricConfig&) const = default;
};

struct LesionMatch {
  int gt_lesion_id = 0;                  // component id in the dilated GT labeling
  std::vector<int> pred_component_ids;   // component ids in the prediction labeling
  double dice = 0.0;
  double hd95 = 0.0;  // capped at fp_hd95_penalty
  std::size_t gt_volume_voxels = 0;
  std::size_t pred_volume_voxels = 0;
};

struct LesionScores {
  double ld = 0.0;
  double lh95 = 0.0;
  std::vector<LesionMatch> lesions;
  std::size_t fp_count = 0;
};

struct CaseMetrics {
  std::string case_id;
  std::map<std::string, LesionScores> regions;  // keyed by report region name
};

/// Plain Dice 2|A∩B| / (|A|+|B|); two empty masks score 1.
double dice(const Mask& a, const Mask& b);

LesionScores lesionwise_scores(const Mask& gt, const Mask& pred, const MetricConfig& cfg);

/// Scores every report region (ET, NETC, RC, SNFH, TC, WT).
CaseMetrics evaluate_case(const LabelMap& gt, const LabelMap& pred, const MetricConfig& cfg,
                          const RegionDefinitions& defs = RegionDefinitions{},
                          const std::string& case_id = "");

}  // namespace gliofuse
