#include "gliofuse/weighted_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numeric>

#include "gliofuse/random.hpp"

namespace gliofuse {

WeightMatrix WeightMatrix::uniform(std::vector<std::string> class_names, std::size_t models) {
  WeightMatrix w;
  w.weights.assign(class_names.size(),
                   std::vector<double>(models, 1.0 / static_cast<double>(models)));
  w.class_names = std::move(class_names);
  return w;
}

WeightMatrix WeightMatrix::corner(std::vector<std::string> class_names, std::size_t models,
                                  std::size_t model) {
  WeightMatrix w;
  std::vector<double> row(models, 0.0);
  row.at(model) = 1.0;
  w.weights.assign(class_names.size(), row);
  w.class_names = std::move(class_names);
  return w;
}

void WeightMatrix::validate() const {
  if (weights.empty()) throw InputError("weight matrix has no classes");
  if (class_names.size() != weights.size()) {
    throw InputError("weight matrix has " + std::to_string(weights.size()) + " rows but " +
                     std::to_string(class_names.size()) + " class names");
  }
  const std::size_t m = weights[0].size();
  if (m == 0) throw InputError("weight matrix has no models");
  for (std::size_t c = 0; c < weights.size(); ++c) {
    if (weights[c].size() != m) {
      throw InputError("class " + class_names[c] + " has " + std::to_string(weights[c].size()) +
                       " weights, expected " + std::to_string(m));
    }
    double sum = 0.0;
    for (double v : weights[c]) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw InputError("class " + class_names[c] + " has a negative or non-finite weight");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InputError("weights of class " + class_names[c] + " sum to " + std::to_string(sum));
    }
  }
  if (!model_names.empty() && model_names.size() != m) {
    throw InputError("weight matrix lists " + std::to_string(model_names.size()) +
                     " model names for " + std::to_string(m) + " models");
  }
}

FusionResult fuse_weighted(std::span<const ProbStack> stacks, const WeightMatrix& w,
                           const LabelEncoding& encoding) {
  if (stacks.empty()) throw InputError("weighted fusion needs at least one probability stack");
  w.validate();
  const auto classes = encoding.class_names();
  if (w.class_names != classes) {
    throw InputError("weight matrix classes do not match the label encoding");
  }
  if (w.model_count() != stacks.size()) {
    throw InputError("weight matrix covers " + std::to_string(w.model_count()) + " models but " +
                     std::to_string(stacks.size()) + " stacks were given");
  }
  const Geometry& g = stacks.front().geometry();
  for (std::size_t j = 0; j < stacks.size(); ++j) {
    require_same_geometry(g, stacks[j].geometry(), "stack 0", "stack " + std::to_string(j));
    if (stacks[j].channel_count() != classes.size()) {
      throw InputError("stack " + std::to_string(j) + " has " +
                       std::to_string(stacks[j].channel_count()) + " channels, expected " +
                       std::to_string(classes.size()));
    }
  }

  const std::size_t n = g.voxel_count();
  const std::size_t nc = classes.size();
  std::vector<float> fused(nc * n, 0.0f);
  Image<std::uint8_t> codes(g, std::uint8_t{0});
  std::size_t zero_voxels = 0;
  std::vector<double> acc(nc);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      double a = 0.0;
      for (std::size_t j = 0; j < stacks.size(); ++j) {
        a += w.weights[c][j] * static_cast<double>(stacks[j].at(c, i));
      }
      acc[c] = a;
      total += a;
    }
    if (!(total > 0.0)) {
      ++zero_voxels;
      fused[i] = 1.0f;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      fused[c * n + i] = static_cast<float>(acc[c] / total);
      if (acc[c] > acc[best]) best = c;
    }
    codes[i] = encoding.code_of_channel(best);
  }
  return {ProbStack(g, nc, std::move(fused)), LabelMap(std::move(codes), encoding), zero_voxels};
}

ProbStack labelmap_to_probstack(const LabelMap& labels) {
  const std::size_t nc = labels.encoding().size() + 1;
  const std::size_t n = labels.size();
  std::vector<float> values(nc * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    const auto channel = labels.encoding().channel_of_code(labels[i]);
    values[*channel * n + i] = 1.0f;
  }
  return ProbStack(labels.geometry(), nc, std::move(values));
}

LabelMap argmax_labels(const ProbStack& stack, const LabelEncoding& encoding) {
  if (stack.channel_count() != encoding.size() + 1) {
    throw InputError("stack has " + std::to_string(stack.channel_count()) +
                     " channels but the encoding defines " + std::to_string(encoding.size() + 1) +
                     " classes");
  }
  Image<std::uint8_t> codes(stack.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < stack.voxel_count(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < stack.channel_count(); ++c) {
      if (stack.at(c, i) > stack.at(best, i)) best = c;
    }
    codes[i] = encoding.code_of_channel(best);
  }
  return LabelMap(std::move(codes), encoding);
}

std::vector<double> project_to_simplex(const std::vector<double>& v) {
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumulative += u[k];
    const double t = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = std::max(v[k] - theta, 0.0);
    sum += out[k];
  }
  for (auto& x : out) x /= sum;
  return out;
}

void FitConfig::validate() const {
  if (restarts < 1) throw InputError("fit restarts must be >= 1");
  if (budget < restarts) throw InputError("fit budget must be >= restarts");
  for (double s : steps) {
    if (!(s > 0.0)) throw InputError("coordinate-search steps must be > 0");
  }
  if (workers < 1) throw InputError("workers must be >= 1");
  metric.validate();
}

namespace {

double case_score(const HeldOutCase& c, const WeightMatrix& w, const FitConfig& cfg,
                  const RegionDefinitions& defs) {
  const FusionResult fused = fuse_weighted(c.stacks, w, c.gt.encoding());
  double sum = 0.0;
  if (cfg.objective == FitObjective::MeanLesionwiseDice) {
    const CaseMetrics m = evaluate_case(c.gt, fused.labels, cfg.metric, defs, c.id);
    for (const auto& region : kReportRegions) sum += m.regions.at(region).ld;
  } else {
    for (const auto& region : kReportRegions) {
      sum += dice(binarize(c.gt, region, defs), binarize(fused.labels, region, defs));
    }
  }
  return sum / static_cast<double>(kReportRegions.size());
}

double mean_score(std::span<const HeldOutCase> cases, const WeightMatrix& w,
                  const FitConfig& cfg, const RegionDefinitions& defs) {
  std::vector<double> scores(cases.size(), 0.0);
  const std::size_t workers = std::min<std::size_t>(cfg.workers, cases.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < cases.size(); ++k) scores[k] = case_score(cases[k], w, cfg, defs);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t t = 0; t < workers; ++t) {
      jobs.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t k = t; k < cases.size(); k += workers) {
          scores[k] = case_score(cases[k], w, cfg, defs);
        }
      }));
    }
    for (auto& j : jobs) j.get();
  }
  // Fixed summation order keeps the objective bit-identical across worker counts.
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(cases.size());
}

std::vector<double> dirichlet_sample(std::size_t k, Rng& rng) {
  std::vector<double> out(k);
  double sum = 0.0;
  for (auto& x : out) {
    x = -std::log(1.0 - uniform01(rng));
    sum += x;
  }
  for (auto& x : out) x /= sum;
  return out;
}

class Search {
 public:
  Search(std::span<const HeldOutCase> cases, const FitConfig& cfg, const RegionDefinitions& defs,
         FitResult& result)
      : cases_(cases), cfg_(cfg), defs_(defs), result_(result) {}

  double evaluate(const WeightMatrix& w) {
    const double v = mean_score(cases_, w, cfg_, defs_);
    ++result_.evaluations;
    if (result_.trace.empty() || v > result_.objective) {
      result_.objective = v;
      result_.weights = w;
    }
    result_.trace.push_back(result_.objective);
    return v;
  }

 private:
  std::span<const HeldOutCase> cases_;
  const FitConfig& cfg_;
  const RegionDefinitions& defs_;
  FitResult& result_;
};

}  // namespace

double ensemble_objective(std::span<const HeldOutCase> cases, const WeightMatrix& w,
                          const FitConfig& cfg, const RegionDefinitions& defs) {
  if (cases.empty()) throw InputError("objective over an empty case set");
  return mean_score(cases, w, cfg, defs);
}

FitResult fit_weights(std::span<const HeldOutCase> cases, const FitConfig& cfg,
                      const RegionDefinitions& defs) {
  cfg.validate();
  if (cases.empty()) throw InputError("held-out set is empty");
  const std::size_t models = cases.front().stacks.size();
  if (models == 0) throw InputError("held-out case " + cases.front().id + " lists no models");
  for (const auto& c : cases) {
    if (c.stacks.size() != models) {
      throw InputError("case " + c.id + " has " + std::to_string(c.stacks.size()) +
                       " models, expected " + std::to_string(models));
    }
  }
  const auto classes = cases.front().gt.encoding().class_names();

  FitResult result;

  // Cases that cannot be scored are excluded up front, with a warning.
  std::vector<HeldOutCase> usable;
  const WeightMatrix probe = WeightMatrix::uniform(classes, models);
  for (const auto& c : cases) {
    try {
      case_score(c, probe, cfg, defs);
      usable.push_back(c);
    } catch (const std::exception& e) {
      result.warnings.push_back("case " + c.id + " excluded: " + e.what());
    }
  }
  if (usable.empty()) throw InputError("no held-out case could be evaluated");

  Search search(usable, cfg, defs, result);

  for (std::size_t k = 0; k < models; ++k) {
    result.corner_objectives.push_back(search.evaluate(WeightMatrix::corner(classes, models, k)));
  }
  if (models == 1) return result;

  const std::size_t first_class = cfg.fit_background ? 0 : 1;
  Rng rng(split_seed(cfg.seed, 0));
  int remaining = cfg.budget;

  auto random_start = [&] {
    WeightMatrix w = WeightMatrix::uniform(classes, models);
    for (std::size_t c = first_class; c < classes.size(); ++c) w.weights[c] = dirichlet_sample(models, rng);
    return w;
  };

  if (cfg.optimizer == FitOptimizer::DirichletRandomSearch) {
    while (remaining-- > 0) search.evaluate(random_start());
    return result;
  }

  for (int r = 0; r < cfg.restarts && remaining > 0; ++r) {
    WeightMatrix current = r == 0 ? WeightMatrix::uniform(classes, models) : random_start();
    double current_value = search.evaluate(current);
    --remaining;
    for (double step : cfg.steps) {
      bool improved = true;
      while (improved && remaining > 0) {
        improved = false;
        for (std::size_t c = first_class; c < classes.size() && remaining > 0; ++c) {
          for (std::size_t j = 0; j < models && remaining > 0; ++j) {
            for (double sign : {1.0, -1.0}) {
              if (remaining <= 0) break;
              std::vector<double> moved = current.weights[c];
              moved[j] += sign * step;
              moved = project_to_simplex(moved);
              double change = 0.0;
              for (std::size_t m = 0; m < models; ++m) {
                change += std::abs(moved[m] - current.weights[c][m]);
              }
              if (change < 1e-12) continue;
              WeightMatrix candidate = current;
              candidate.weights[c] = std::move(moved);
              const double v = search.evaluate(candidate);
              --remaining;
              if (v > current_value) {
                current = std::move(candidate);
                current_value = v;
                improved = true;
              }
            }
          }
        }
      }
    }
  }
  return result;
}

}  // namespace gliofuse
