#ifndef VTRACK_PROBE_MODEL_HPP
#define VTRACK_PROBE_MODEL_HPP

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vtrack/similarity.hpp"
#include "vtrack/transform.hpp"
#include "vtrack/volume.hpp"

namespace vtrack {

// Anatomy-constrained 3-DOF probe movement model: the prostate surface is
// the bounding-box aligned ellipsoid, the probe head stays on it, and the
// principal probe axis always passes through a fixed point in the rectum.
// A pose (alpha, beta) picks a surface point by a polar parameterization
// whose pole is the center-to-fixed-point ray intersection; lambda rolls
// about the probe axis.
struct ProbeMovementModel {
  Vec3 ellipsoid_center = Vec3::Zero();  // C_Pro
  Vec3 semi_axes = Vec3::Ones();
  Vec3 fp_rect = Vec3::Zero();           // rotational fixed point in the rectum
  Vec3 probe_origin_ref = Vec3::Zero();  // O_US in reference image coordinates
  Vec3 probe_axis_ref = Vec3::UnitZ();   // unit, pointing from the fixed point
                                         // toward the gland

  // Normalized ellipsoid residual: < 1 inside, 1 on the surface.
  double ellipsoid_rho(const Vec3& p) const {
    const Vec3 d = (p - ellipsoid_center).cwiseQuotient(semi_axes);
    return d.norm();
  }
};

struct ProbePose {
  double alpha = 0.0;   // radians, tilt
  double beta = 0.0;    // radians, tilt
  double lambda = 0.0;  // radians, roll about the principal probe axis
};

// Derives the ellipsoid from the prostate bounding box and stores the probe
// geometry verbatim. Throws FixedPointInside when fp_rect is not strictly
// outside the ellipsoid. pose (0,0,0) reproduces the reference placement
// exactly when probe_origin_ref is the pole point and the axis runs through
// fp_rect (see consistent_model).
ProbeMovementModel build_model(const Vec3& bbox_lo, const Vec3& bbox_hi,
                               const Vec3& fp_rect, const Vec3& probe_origin_ref,
                               const Vec3& probe_axis_ref);

// Self-consistent model from a bounding box and a probe axis direction:
// fp_rect sits fp_distance from the center along -axis, the probe origin is
// the pole point on the ellipsoid.
ProbeMovementModel consistent_model(const Vec3& bbox_lo, const Vec3& bbox_hi,
                                    const Vec3& probe_axis, double fp_distance);

// Ellipsoid point at polar coordinates (alpha, beta) in the tangent frame
// at the pole; surface_point(model, 0, 0) is the pole itself.
Vec3 surface_point(const ProbeMovementModel& model, double alpha, double beta);

// Rigid motion from the reference placement to the hypothesized one, in
// reference-image coordinates. It maps tracking-image coordinates to
// reference coordinates when used for sampling. The probe origin lands on
// surface_point(alpha, beta), the transformed axis passes through fp_rect,
// lambda rolls about it, and (0,0,0) is the identity.
RigidTransform pose_to_transform(const ProbeMovementModel& model, const ProbePose& pose);

// Precomputed reference samples for every (pose, domain point) pair, so
// systematic exploration needs no intra-interventional reslicing. NaN
// entries mark absent samples.
struct PoseCache {
  std::size_t n_poses = 0;
  std::size_t n_points_int = 0;
  std::size_t n_points_grad = 0;
  std::vector<float> intensity;  // n_poses x n_points_int
  std::vector<float> gradient;   // n_poses x n_points_grad

  const float* intensity_row(std::size_t pose) const {
    return intensity.data() + pose * n_points_int;
  }
  const float* gradient_row(std::size_t pose) const {
    return gradient.data() + pose * n_points_grad;
  }
};

struct ExplorationGrid {
  std::array<int, 3> steps{0, 0, 0};  // n_alpha, n_beta, n_lambda
  double tilt_limit = 0.0;
  std::vector<ProbePose> poses;                  // lambda fastest, then beta, then alpha
  std::vector<RigidTransform> transforms;        // pose_to_transform per pose
  std::shared_ptr<const PoseCache> cache;
};

// Equidistant product grid: lambda covers (-pi, pi] in n_lambda steps,
// alpha and beta cover [-tilt_limit, +tilt_limit] inclusive.
ExplorationGrid generate_grid(const ProbeMovementModel& model, int n_alpha, int n_beta,
                              int n_lambda, double tilt_limit);

// Samples the reference level (and its gradient-magnitude image) at every
// transformed domain point of every pose; points whose image leaves the
// prostate box store NaN like absent samples do. Evaluating from the cache
// is bit-identical to sampling.
ExplorationGrid precompute_cache(ExplorationGrid grid, const Volume& reference_level,
                                 const Volume& reference_grad_level,
                                 const std::vector<Vec3>& points, const Vec3& bbox_lo,
                                 const Vec3& bbox_hi);

// Binary sidecar persistence, magic VTCACHE1.
void write_cache(const PoseCache& cache, const std::string& path);
PoseCache read_cache(const std::string& path);

}  // namespace vtrack

#endif  // VTRACK_PROBE_MODEL_HPP
