#ifndef VTRACK_SIMILARITY_HPP
#define VTRACK_SIMILARITY_HPP

#include <optional>
#include <string>
#include <vector>

#include "vtrack/volume.hpp"

namespace vtrack {

// Sufficient statistics of one similarity evaluation over the masked
// overlap: count plus the running sums needed for Pearson correlation.
struct OverlapStats {
  long long n = 0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  double overlap_fraction = 0.0;

  void accumulate(double x, double y) {
    ++n;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  double variance_x() const { return n ? sxx / n - (sx / n) * (sx / n) : 0.0; }
  double variance_y() const { return n ? syy / n - (sy / n) * (sy / n) : 0.0; }

  // Pearson correlation, absent when overlap_fraction falls below
  // min_overlap or either variance degenerates.
  std::optional<double> correlation(double min_overlap) const;
};

// Fixed side of a similarity evaluation: world points with their
// intensities, all finite. cache_index maps each point to its column in a
// precomputed reslice cache built over a larger point lattice; empty means
// the identity mapping.
struct EvaluationDomain {
  std::vector<Vec3> points;
  std::vector<float> values;
  std::vector<int> cache_index;
  std::string source_description;

  std::size_t size() const { return points.size(); }
  void validate() const;
};

// Builds a domain from every mask-valid voxel center of `volume` whose
// world position falls inside [lo, hi]. Throws when the box captures
// nothing.
EvaluationDomain make_lattice_domain(const Volume& volume, const Vec3& lo,
                                     const Vec3& hi, std::string description);

// Pearson correlation between the domain values and moving-image samples at
// transformed points. Absent when fewer than min_overlap of the points pair
// up or either side's variance degenerates.
std::optional<double> pearson_cc(const EvaluationDomain& domain, const Volume& moving,
                                 const RigidTransform& t, double min_overlap);

// The combined intensity/gradient-magnitude energy
//   (1 - CC_int) * (1 - CC_grad),
// in [0, 4]; absent if either correlation is absent. moving_grad must be
// gradient_magnitude(moving) at the same pyramid level.
std::optional<double> attribute_energy(const EvaluationDomain& domain_int,
                                       const EvaluationDomain& domain_grad,
                                       const Volume& moving, const Volume& moving_grad,
                                       const RigidTransform& t, double min_overlap);

// (H(A) + H(B)) / H(A,B) over an equal-width joint histogram of the
// overlap; baseline measure only.
std::optional<double> nmi(const EvaluationDomain& domain, const Volume& moving,
                          const RigidTransform& t, int bins, double min_overlap);

// Mean squared intensity difference over the overlap; baseline measure.
std::optional<double> ssd(const EvaluationDomain& domain, const Volume& moving,
                          const RigidTransform& t, double min_overlap);

// Same correlations computed against one row of a precomputed cache
// instead of sampling `moving`; NaN cache entries mark absent samples.
// Bit-identical to the sampling path by construction.
std::optional<double> pearson_cc_cached(const EvaluationDomain& domain,
                                        const float* cache_row, double min_overlap);
std::optional<double> attribute_energy_cached(const EvaluationDomain& domain_int,
                                              const EvaluationDomain& domain_grad,
                                              const float* cache_int_row,
                                              const float* cache_grad_row,
                                              double min_overlap);

}  // namespace vtrack

#endif  // VTRACK_SIMILARITY_HPP
