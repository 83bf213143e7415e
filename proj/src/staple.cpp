#include "gliofuse/staple.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace gliofuse {

namespace {

double clamp_probability(double v) {
  return std::clamp(v, kStapleProbabilityFloor, 1.0 - kStapleProbabilityFloor);
}

double log_sum_exp(double a, double b) {
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(lo - hi));
}

std::vector<std::size_t> roi_voxels(std::span<const Mask> decisions, RoiMode mode) {
  const Geometry& g = decisions.front().geometry();
  const std::size_t n = g.voxel_count();
  std::vector<std::size_t> out;
  if (mode == RoiMode::AllVoxels) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  std::array<std::size_t, 3> lo{g.shape[0], g.shape[1], g.shape[2]};
  std::array<std::size_t, 3> hi{0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (const auto& d : decisions) any = any || d[i] != 0;
    if (!any) continue;
    const auto c = g.coords(i);
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], c[k]);
      hi[k] = std::max(hi[k], c[k] + 1);
    }
  }
  for (int k = 0; k < 3; ++k) {
    lo[k] = lo[k] > 0 ? lo[k] - 1 : 0;
    hi[k] = std::min(hi[k] + 1, g.shape[k]);
  }
  for (std::size_t z = lo[2]; z < hi[2]; ++z) {
    for (std::size_t y = lo[1]; y < hi[1]; ++y) {
      for (std::size_t x = lo[0]; x < hi[0]; ++x) out.push_back(g.index(x, y, z));
    }
  }
  return out;
}

}  // namespace

void StapleConfig::validate() const {
  if (max_iter < 1) throw InputError("STAPLE max_iter must be >= 1");
  if (!(tol > 0.0)) throw InputError("STAPLE tol must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("STAPLE threshold must lie in (0,1)");
  if (!(init_p > 0.0 && init_p <= 1.0) || !(init_q > 0.0 && init_q <= 1.0)) {
    throw InputError("STAPLE init_p and init_q must lie in (0,1]");
  }
  if (prior_mode == PriorMode::Fixed && !(fixed_prior > 0.0 && fixed_prior < 1.0)) {
    throw InputError("STAPLE fixed prior must lie in (0,1)");
  }
}

StapleResult staple_binary(std::span<const Mask> decisions, const StapleConfig& cfg) {
  cfg.validate();
  if (decisions.empty()) throw InputError("STAPLE needs at least one rater");
  const Geometry& g = decisions.front().geometry();
  for (std::size_t j = 0; j < decisions.size(); ++j) {
    require_same_geometry(g, decisions[j].geometry(), "rater 0", "rater " + std::to_string(j));
    for (std::size_t i = 0; i < decisions[j].size(); ++i) {
      if (decisions[j][i] > 1) {
        throw InputError("rater " + std::to_string(j) + " is not binary at voxel index " +
                         std::to_string(i));
      }
    }
  }

  const std::size_t n = g.voxel_count();
  const std::size_t raters = decisions.size();

  std::size_t votes = 0;
  for (const auto& d : decisions) votes += count_nonzero(d);

  StapleResult out;
  out.posterior = Image<double>(g, 0.0);
  out.performance.p.assign(raters, cfg.init_p);
  out.performance.q.assign(raters, cfg.init_q);

  if (votes == 0) {
    out.performance.iterations = 1;
    out.performance.converged = true;
    return out;
  }

  double prior = clamp_probability(
      cfg.prior_mode == PriorMode::Fixed
          ? cfg.fixed_prior
          : static_cast<double>(votes) / (static_cast<double>(raters) * static_cast<double>(n)));

  const std::vector<std::size_t> roi = roi_voxels(decisions, cfg.roi_mode);
  const double outside = static_cast<double>(n - roi.size());

  std::vector<double>& p = out.performance.p;
  std::vector<double>& q = out.performance.q;
  for (auto& v : p) v = clamp_probability(v);
  for (auto& v : q) v = clamp_probability(v);

  std::vector<double> lp(raters), l1p(raters), lq(raters), l1q(raters);
  std::vector<double> sum_wd(raters), sum_vd(raters);
  double outside_w = 0.0;
  bool degenerate = false;

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    const double log_f = std::log(prior);
    const double log_1f = std::log1p(-prior);
    for (std::size_t j = 0; j < raters; ++j) {
      lp[j] = std::log(p[j]);
      l1p[j] = std::log1p(-p[j]);
      lq[j] = std::log(q[j]);
      l1q[j] = std::log1p(-q[j]);
    }

    // E-step. sum_wd[j] accumulates W*D, sum_vd[j] accumulates (1-W)*D.
    std::fill(sum_wd.begin(), sum_wd.end(), 0.0);
    std::fill(sum_vd.begin(), sum_vd.end(), 0.0);
    double sum_w = 0.0;
    double sum_v = 0.0;
    double delta = 0.0;
    double loglik = 0.0;
    for (std::size_t i : roi) {
      double la = log_f;
      double lb = log_1f;
      for (std::size_t j = 0; j < raters; ++j) {
        if (decisions[j][i]) {
          la += lp[j];
          lb += l1q[j];
        } else {
          la += l1p[j];
          lb += lq[j];
        }
      }
      const double w = 1.0 / (1.0 + std::exp(lb - la));
      loglik += log_sum_exp(la, lb);
      delta += std::abs(w - out.posterior[i]);
      out.posterior[i] = w;
      sum_w += w;
      sum_v += 1.0 - w;
      for (std::size_t j = 0; j < raters; ++j) {
        if (decisions[j][i]) {
          sum_wd[j] += w;
          sum_vd[j] += 1.0 - w;
        }
      }
    }
    if (outside > 0.0) {
      double la = log_f;
      double lb = log_1f;
      for (std::size_t j = 0; j < raters; ++j) {
        la += l1p[j];
        lb += lq[j];
      }
      const double w = 1.0 / (1.0 + std::exp(lb - la));
      loglik += outside * log_sum_exp(la, lb);
      delta += outside * std::abs(w - outside_w);
      outside_w = w;
      sum_w += outside * w;
      sum_v += outside * (1.0 - w);
    }
    out.log_likelihood.push_back(loglik);

    // M-step. Denominators of zero keep the previous parameter.
    for (std::size_t j = 0; j < raters; ++j) {
      if (sum_w > 0.0) {
        p[j] = clamp_probability(sum_wd[j] / sum_w);
      } else {
        degenerate = true;
      }
      if (sum_v > 0.0) {
        q[j] = clamp_probability((sum_v - sum_vd[j]) / sum_v);
      } else {
        degenerate = true;
      }
    }

    if (cfg.prior_mode == PriorMode::Estimated) {
      prior = clamp_probability(sum_w / static_cast<double>(n));
    }

    out.performance.iterations = iter;
    if (iter > 1 && delta / static_cast<double>(n) < cfg.tol) {
      out.performance.converged = !degenerate;
      break;
    }
  }

  out.prior = prior;
  if (outside > 0.0) {
    std::vector<bool> in_roi(n, false);
    for (std::size_t i : roi) in_roi[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_roi[i]) out.posterior[i] = outside_w;
    }
  }
  return out;
}

Mask threshold_posterior(const Image<double>& posterior, double threshold) {
  Mask out(posterior.geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < posterior.size(); ++i) out[i] = posterior[i] > threshold ? 1 : 0;
  return out;
}

LabelMap assign_consensus(std::span<const Image<double>> posteriors, const LabelEncoding& encoding,
                          double threshold) {
  const auto& entries = encoding.entries();
  if (posteriors.size() != entries.size()) {
    throw InputError("expected one posterior per label, got " + std::to_string(posteriors.size()));
  }
  if (posteriors.empty()) throw InputError("no posteriors to assign");
  // Visit labels by ascending code so a tie keeps the lowest one.
  std::vector<std::size_t> order(entries.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return entries[a].code < entries[b].code; });
  Image<std::uint8_t> codes(posteriors.front().geometry(), std::uint8_t{0});
  for (std::size_t i = 0; i < codes.size(); ++i) {
    double best = threshold;
    std::uint8_t label = 0;
    for (std::size_t k : order) {
      const double w = posteriors[k][i];
      if (w > best) {
        best = w;
        label = entries[k].code;
      }
    }
    codes[i] = label;
  }
  return LabelMap(std::move(codes), encoding);
}

MultiLabelStapleResult staple_multilabel(std::span<const LabelMap> raters,
                                         const StapleConfig& cfg) {
  cfg.validate();
  if (raters.empty()) throw InputError("STAPLE needs at least one rater");
  const LabelMap& first = raters.front();
  for (std::size_t j = 1; j < raters.size(); ++j) {
    require_same_geometry(first.geometry(), raters[j].geometry(), "rater 0",
                          "rater " + std::to_string(j));
    if (!(raters[j].encoding() == first.encoding())) {
      throw InputError("rater " + std::to_string(j) + " uses a different label encoding");
    }
  }

  const auto& entries = first.encoding().entries();
  std::vector<std::future<StapleResult>> jobs;
  for (const auto& entry : entries) {
    jobs.push_back(std::async(std::launch::async, [&raters, &cfg, code = entry.code] {
      std::vector<Mask> masks;
      masks.reserve(raters.size());
      for (const auto& r : raters) {
        Mask m(r.geometry(), std::uint8_t{0});
        for (std::size_t i = 0; i < r.size(); ++i) m[i] = r[i] == code ? 1 : 0;
        masks.push_back(std::move(m));
      }
      return staple_binary(masks, cfg);
    }));
  }

  MultiLabelStapleResult out;
  std::vector<StapleResult> results;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    results.push_back(jobs[k].get());
    out.performance[entries[k].name] = results.back().performance;
  }

  std::vector<Image<double>> posteriors;
  for (auto& r : results) posteriors.push_back(std::move(r.posterior));
  out.consensus = assign_consensus(posteriors, first.encoding(), cfg.threshold);
  return out;
}

}  // namespace gliofuse
