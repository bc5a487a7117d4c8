#ifndef VTRACK_TRANSFORM_HPP
#define VTRACK_TRANSFORM_HPP

#include <Eigen/Dense>
#include <vector>

#include "vtrack/error.hpp"

namespace vtrack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid motion in mm space: p -> rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  static RigidTransform identity() { return {}; }
};

// a then-after b: apply(compose(a, b), p) == apply(a, apply(b, p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

// True when R is orthonormal with det +1 within tol.
bool is_rotation(const Mat3& r, double tol = 1e-9);

// Rotation by `angle` radians about unit `axis`, pivoting at `center`.
RigidTransform rotation_about(const Vec3& axis, double angle, const Vec3& center);

// Six-parameter chart for local optimization: axis-angle rotation vector
// (radians) followed by translation (mm). `scale` equilibrates optimizer
// steps; the default makes one scaled rotation unit move a point at 25 mm
// radius by about 1 mm.
struct RigidParams {
  Eigen::Matrix<double, 6, 1> values = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 1> scale = default_scale();

  static Eigen::Matrix<double, 6, 1> default_scale() {
    Eigen::Matrix<double, 6, 1> s;
    s << 0.04, 0.04, 0.04, 1.0, 1.0, 1.0;
    return s;
  }

  Eigen::Matrix<double, 6, 1> to_scaled() const {
    return values.cwiseQuotient(scale);
  }
  static RigidParams from_scaled(const Eigen::Matrix<double, 6, 1>& x,
                                 const Eigen::Matrix<double, 6, 1>& scale) {
    RigidParams p;
    p.values = x.cwiseProduct(scale);
    p.scale = scale;
    return p;
  }
};

// Exponential map of the axis-angle vector; inverse valid on the canonical
// branch (angle < pi). transform_to_params throws NonCanonical at angle pi.
RigidTransform params_to_transform(const RigidParams& p);
RigidParams transform_to_params(const RigidTransform& t);

// Mean of a clustered transform set: arithmetic mean of translations,
// normalized sign-aligned quaternion sum for rotations. Throws Dispersed
// when any pairwise rotation angle exceeds 90 degrees.
RigidTransform average_transforms(const std::vector<RigidTransform>& ts);

// || t_i(c) - t_bar(c) || in mm.
double euclidean_error(const RigidTransform& t_i, const RigidTransform& t_bar,
                       const Vec3& c);

// Rotation angle of inverse(t_i) * t_bar, in degrees, in [0, 180].
double angular_error(const RigidTransform& t_i, const RigidTransform& t_bar);

// Relative rotation angle in radians (same quantity as angular_error).
double rotation_angle_between(const Mat3& a, const Mat3& b);

double rms(const std::vector<double>& values);

}  // namespace vtrack

#endif  // VTRACK_TRANSFORM_HPP
