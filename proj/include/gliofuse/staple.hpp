#pragma once

// STAPLE consensus estimation by expectation-maximization.
//
// Each rater j labels a voxel foreground with probability p_j when the hidden
// truth is foreground (sensitivity) and background with probability q_j when
// it is background (specificity). EM alternates
//
//   E-step  W_i = a_i / (a_i + b_i),
//           a_i = f   * prod_j p_j^D_ij (1-p_j)^(1-D_ij)
//           b_i = (1-f) * prod_j q_j^(1-D_ij) (1-q_j)^D_ij
//   M-step  p_j = sum_i W_i D_ij / sum_i W_i
//           q_j = sum_i (1-W_i)(1-D_ij) / sum_i (1-W_i)
//
// with products evaluated in log space. The prior f is constant over voxels.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "gliofuse/volume.hpp"

namespace gliofuse {

/// GlobalPrevalence: fraction of foreground votes, averaged over raters.
/// Estimated: starts there and is refit as the mean posterior after every
/// M-step (still spatially constant).
enum class PriorMode { GlobalPrevalence, Fixed, Estimated };
enum class RoiMode { AllVoxels, UnionBoundingBox };

struct StapleConfig {
  int max_iter = 100;
  /// Convergence when the mean absolute change of W between two successive
  /// E-steps drops below tol.
  double tol = 1e-6;
  PriorMode prior_mode = PriorMode::GlobalPrevalence;
  double fixed_prior = 0.5;  // used when prior_mode == Fixed
  double init_p = 0.99999;
  double init_q = 0.99999;
  double threshold = 0.5;
  /// UnionBoundingBox evaluates only the padded bounding box of all rater
  /// foregrounds and folds the unanimous-background remainder in analytically.
  RoiMode roi_mode = RoiMode::UnionBoundingBox;

  void validate() const;
  bool operator==(const StapleConfig&) const = default;
};

/// p, q are clamped to [1e-7, 1 - 1e-7] throughout.
inline constexpr double kStapleProbabilityFloor = 1e-7;

struct RaterPerformance {
  std::vector<double> p;  // sensitivity per rater
  std::vector<double> q;  // specificity per rater
  int iterations = 0;
  bool converged = false;
};

struct StapleResult {
  Image<double> posterior;
  RaterPerformance performance;
  double prior = 0.0;
  /// Observed-data log-likelihood evaluated at each E-step.
  std::vector<double> log_likelihood;
};

StapleResult staple_binary(std::span<const Mask> decisions, const StapleConfig& cfg);

Mask threshold_posterior(const Image<double>& posterior, double threshold);

struct MultiLabelStapleResult {
  LabelMap consensus;
  std::map<std::string, RaterPerformance> performance;  // keyed by region name
};

/// Independent binary STAPLE per foreground label. A voxel receives the label
/// with the highest posterior among those above the threshold (ties go to the
/// lowest code), otherwise background.
/// Per voxel: the label with the highest posterior among those above
/// `threshold` (ties go to the lowest code), otherwise background.
/// `posteriors` follows the order of `encoding.entries()`.
LabelMap assign_consensus(std::span<const Image<double>> posteriors, const LabelEncoding& encoding,
                          double threshold);

MultiLabelStapleResult staple_multilabel(std::span<const LabelMap> raters,
                                         const StapleConfig& cfg);

}  // namespace gliofuse
