#include "vtrack/similarity.hpp"

#include <algorithm>
#include <cmath>

namespace vtrack {

std::optional<double> OverlapStats::correlation(double min_overlap) const {
  constexpr double kVarianceFloor = 1e-12;
  if (n == 0 || overlap_fraction < min_overlap) return std::nullopt;
  const double vx = variance_x();
  const double vy = variance_y();
  if (vx < kVarianceFloor || vy < kVarianceFloor) return std::nullopt;
  const double count = static_cast<double>(n);
  const double cov = sxy / count - (sx / count) * (sy / count);
  return std::clamp(cov / std::sqrt(vx * vy), -1.0, 1.0);
}

namespace {

OverlapStats accumulate_sampled(const EvaluationDomain& domain, const Volume& moving,
                                const RigidTransform& t) {
  OverlapStats stats;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (const auto s = sample_trilinear(moving, t.apply(domain.points[i]))) {
      stats.accumulate(domain.values[i], *s);
    }
  }
  stats.overlap_fraction =
      domain.size() ? static_cast<double>(stats.n) / domain.size() : 0.0;
  return stats;
}

OverlapStats accumulate_cached(const EvaluationDomain& domain, const float* cache_row) {
  OverlapStats stats;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const int col = domain.cache_index.empty() ? static_cast<int>(i)
                                               : domain.cache_index[i];
    const float y = cache_row[col];
    if (!std::isnan(y)) stats.accumulate(domain.values[i], y);
  }
  stats.overlap_fraction =
      domain.size() ? static_cast<double>(stats.n) / domain.size() : 0.0;
  return stats;
}

// Pairs (x, y) materialized for measures that need more than the running
// sums (NMI's histogram passes).
std::vector<std::pair<float, float>> collect_pairs(const EvaluationDomain& domain,
                                                   const Volume& moving,
                                                   const RigidTransform& t) {
  std::vector<std::pair<float, float>> pairs;
  pairs.reserve(domain.size());
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (const auto s = sample_trilinear(moving, t.apply(domain.points[i]))) {
      pairs.emplace_back(domain.values[i], *s);
    }
  }
  return pairs;
}

}  // namespace

void EvaluationDomain::validate() const {
  if (points.empty()) throw Error("EvaluationDomain: empty point set");
  if (values.size() != points.size()) {
    throw Error("EvaluationDomain: values/points size mismatch");
  }
  if (!cache_index.empty() && cache_index.size() != points.size()) {
    throw Error("EvaluationDomain: cache_index/points size mismatch");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw Error("EvaluationDomain: non-finite intensity");
  }
}

EvaluationDomain make_lattice_domain(const Volume& volume, const Vec3& lo,
                                     const Vec3& hi, std::string description) {
  EvaluationDomain domain;
  domain.source_description = std::move(description);
  for (int k = 0; k < volume.dims[2]; ++k) {
    for (int j = 0; j < volume.dims[1]; ++j) {
      for (int i = 0; i < volume.dims[0]; ++i) {
        const std::size_t idx = volume.index(i, j, k);
        if (!volume.valid_at(idx)) continue;
        const Vec3 p = volume.world_from_index(i, j, k);
        if ((p.array() < lo.array()).any() || (p.array() > hi.array()).any()) continue;
        domain.points.push_back(p);
        domain.values.push_back(volume.data[idx]);
      }
    }
  }
  domain.validate();
  return domain;
}

std::optional<double> pearson_cc(const EvaluationDomain& domain, const Volume& moving,
                                 const RigidTransform& t, double min_overlap) {
  domain.validate();
  return accumulate_sampled(domain, moving, t).correlation(min_overlap);
}

std::optional<double> pearson_cc_cached(const EvaluationDomain& domain,
                                        const float* cache_row, double min_overlap) {
  return accumulate_cached(domain, cache_row).correlation(min_overlap);
}

std::optional<double> attribute_energy(const EvaluationDomain& domain_int,
                                       const EvaluationDomain& domain_grad,
                                       const Volume& moving, const Volume& moving_grad,
                                       const RigidTransform& t, double min_overlap) {
  const auto cc_int = pearson_cc(domain_int, moving, t, min_overlap);
  if (!cc_int) return std::nullopt;
  const auto cc_grad = pearson_cc(domain_grad, moving_grad, t, min_overlap);
  if (!cc_grad) return std::nullopt;
  return (1.0 - *cc_int) * (1.0 - *cc_grad);
}

std::optional<double> attribute_energy_cached(const EvaluationDomain& domain_int,
                                              const EvaluationDomain& domain_grad,
                                              const float* cache_int_row,
                                              const float* cache_grad_row,
                                              double min_overlap) {
  const auto cc_int = pearson_cc_cached(domain_int, cache_int_row, min_overlap);
  if (!cc_int) return std::nullopt;
  const auto cc_grad = pearson_cc_cached(domain_grad, cache_grad_row, min_overlap);
  if (!cc_grad) return std::nullopt;
  return (1.0 - *cc_int) * (1.0 - *cc_grad);
}

std::optional<double> nmi(const EvaluationDomain& domain, const Volume& moving,
                          const RigidTransform& t, int bins, double min_overlap) {
  if (bins < 8) throw Error("nmi: bins must be >= 8");
  domain.validate();
  const auto pairs = collect_pairs(domain, moving, t);
  const double fraction = static_cast<double>(pairs.size()) / domain.size();
  if (pairs.empty() || fraction < min_overlap) return std::nullopt;

  float min_x = pairs[0].first, max_x = pairs[0].first;
  float min_y = pairs[0].second, max_y = pairs[0].second;
  for (const auto& [x, y] : pairs) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  const double width_x = static_cast<double>(max_x) - min_x;
  const double width_y = static_cast<double>(max_y) - min_y;
  if (width_x <= 0.0 || width_y <= 0.0) return std::nullopt;

  const auto bin_of = [bins](double v, double lo, double width) {
    const int b = static_cast<int>((v - lo) / width * bins);
    return std::clamp(b, 0, bins - 1);
  };
  std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
  for (const auto& [x, y] : pairs) {
    joint[static_cast<std::size_t>(bin_of(x, min_x, width_x)) * bins +
          bin_of(y, min_y, width_y)] += 1.0;
  }
  std::vector<double> px(bins, 0.0), py(bins, 0.0);
  const double n = static_cast<double>(pairs.size());
  for (int a = 0; a < bins; ++a) {
    for (int b = 0; b < bins; ++b) {
      const double p = joint[static_cast<std::size_t>(a) * bins + b] / n;
      px[a] += p;
      py[b] += p;
    }
  }
  double hx = 0.0, hy = 0.0, hxy = 0.0;
  for (int a = 0; a < bins; ++a) {
    if (px[a] > 0.0) hx -= px[a] * std::log(px[a]);
    if (py[a] > 0.0) hy -= py[a] * std::log(py[a]);
  }
  for (double c : joint) {
    if (c > 0.0) {
      const double p = c / n;
      hxy -= p * std::log(p);
    }
  }
  if (hxy <= 0.0) return std::nullopt;
  return (hx + hy) / hxy;
}

std::optional<double> ssd(const EvaluationDomain& domain, const Volume& moving,
                          const RigidTransform& t, double min_overlap) {
  domain.validate();
  OverlapStats stats;
  double sum_sq_diff = 0.0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (const auto s = sample_trilinear(moving, t.apply(domain.points[i]))) {
      const double d = static_cast<double>(domain.values[i]) - *s;
      sum_sq_diff += d * d;
      ++stats.n;
    }
  }
  stats.overlap_fraction = static_cast<double>(stats.n) / domain.size();
  if (stats.n == 0 || stats.overlap_fraction < min_overlap) return std::nullopt;
  return sum_sq_diff / static_cast<double>(stats.n);
}

}  // namespace vtrack
