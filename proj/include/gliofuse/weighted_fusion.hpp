#pragma once

// Per-class weighted averaging of model probability stacks, and a
// derivative-free search for the weights on held-out cases.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gliofuse/lesion_metrics.hpp"
#include "gliofuse/regions.hpp"
#include "gliofuse/volume.hpp"

namespace gliofuse {

/// One weight vector over models per class; each vector lies on the
/// probability simplex.
struct WeightMatrix {
  std::vector<std::string> class_names;      // background first, encoding order
  std::vector<std::vector<double>> weights;  // weights[class][model]
  std::vector<std::string> model_names;      // optional, for bookkeeping

  std::size_t class_count() const noexcept { return weights.size(); }
  std::size_t model_count() const noexcept { return weights.empty() ? 0 : weights[0].size(); }

  static WeightMatrix uniform(std::vector<std::string> class_names, std::size_t models);
  /// Every class puts all weight on `model`.
  static WeightMatrix corner(std::vector<std::string> class_names, std::size_t models,
                             std::size_t model);

  /// Throws InputError unless every vector is nonnegative and sums to 1
  /// within 1e-9.
  void validate() const;
};

struct FusionResult {
  ProbStack fused;
  LabelMap labels;
  /// Voxels whose weighted channels were all zero; they are assigned background.
  std::size_t zero_voxels = 0;
};

/// fused_c = sum_j w[c][j] * stack_j[c], renormalized per voxel. Labels are
/// the per-voxel argmax (ties to the lowest class).
FusionResult fuse_weighted(std::span<const ProbStack> stacks, const WeightMatrix& w,
                           const LabelEncoding& encoding = LabelEncoding::standard());

/// One-hot stack; argmax_labels inverts it exactly.
ProbStack labelmap_to_probstack(const LabelMap& labels);

LabelMap argmax_labels(const ProbStack& stack,
                       const LabelEncoding& encoding = LabelEncoding::standard());

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(const std::vector<double>& v);

enum class FitObjective { MeanLesionwiseDice, MeanPlainDice };
enum class FitOptimizer { CoordinateSearch, DirichletRandomSearch };

struct FitConfig {
  FitObjective objective = FitObjective::MeanLesionwiseDice;
  FitOptimizer optimizer = FitOptimizer::CoordinateSearch;
  int restarts = 2;
  /// Search evaluations, not counting the mandatory simplex corners.
  int budget = 400;
  /// Coordinate-search step sizes, applied from largest to smallest.
  std::vector<double> steps = {0.5, 0.25, 0.125, 0.0625, 0.03125};
  std::uint64_t seed = 0;
  /// When false the background weights stay uniform.
  bool fit_background = true;
  MetricConfig metric{};
  int workers = 1;

  void validate() const;
};

struct HeldOutCase {
  std::string id;
  std::vector<ProbStack> stacks;  // one per model, same model order in every case
  LabelMap gt;
};

struct FitResult {
  WeightMatrix weights;
  double objective = 0.0;
  std::vector<double> trace;              // best-so-far after each evaluation
  std::vector<double> corner_objectives;  // single-model objectives
  std::vector<std::string> warnings;      // excluded cases
  std::size_t evaluations = 0;
};

/// Mean over cases of the per-case score: the average over report regions of
/// lesion-wise Dice (or plain Dice).
double ensemble_objective(std::span<const HeldOutCase> cases, const WeightMatrix& w,
                          const FitConfig& cfg, const RegionDefinitions& defs = {});

FitResult fit_weights(std::span<const HeldOutCase> cases, const FitConfig& cfg,
                      const RegionDefinitions& defs = {});

}  // namespace gliofuse
