#include "vtrack/transform.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace vtrack {

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform invert(const RigidTransform& t) {
  RigidTransform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 should_be_identity = r * r.transpose();
  return (should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

RigidTransform rotation_about(const Vec3& axis, double angle, const Vec3& center) {
  RigidTransform out;
  out.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  out.translation = center - out.rotation * center;
  return out;
}

RigidTransform params_to_transform(const RigidParams& p) {
  const Vec3 rvec = p.values.head<3>();
  const double angle = rvec.norm();
  RigidTransform out;
  if (angle < 1e-300) {
    out.rotation = Mat3::Identity();
  } else {
    out.rotation = Eigen::AngleAxisd(angle, rvec / angle).toRotationMatrix();
  }
  out.translation = p.values.tail<3>();
  return out;
}

RigidParams transform_to_params(const RigidTransform& t) {
  const Eigen::AngleAxisd aa(t.rotation);
  if (std::abs(aa.angle() - M_PI) <= 1e-9) {
    throw NonCanonical("rotation angle at pi: axis-angle branch ambiguous");
  }
  RigidParams p;
  p.values.head<3>() = aa.angle() * aa.axis();
  p.values.tail<3>() = t.translation;
  return p;
}

RigidTransform average_transforms(const std::vector<RigidTransform>& ts) {
  if (ts.empty()) {
    throw Error("average_transforms: empty transform list");
  }
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      const double angle = rotation_angle_between(ts[i].rotation, ts[j].rotation);
      if (angle > M_PI / 2.0) {
        throw Dispersed("average_transforms: pairwise rotation exceeds 90 degrees");
      }
    }
  }

  bool all_identical = true;
  for (const auto& t : ts) {
    all_identical = all_identical && t.rotation == ts.front().rotation &&
                    t.translation == ts.front().translation;
  }
  if (all_identical) return ts.front();

  Vec3 mean_translation = Vec3::Zero();
  for (const auto& t : ts) mean_translation += t.translation;
  mean_translation /= static_cast<double>(ts.size());

  const Eigen::Quaterniond first(ts.front().rotation);
  Eigen::Vector4d sum = Eigen::Vector4d::Zero();
  for (const auto& t : ts) {
    Eigen::Quaterniond q(t.rotation);
    if (q.coeffs().dot(first.coeffs()) < 0.0) q.coeffs() = -q.coeffs();
    sum += q.coeffs();
  }
  Eigen::Quaterniond mean_q;
  mean_q.coeffs() = sum.normalized();

  RigidTransform out;
  out.rotation = mean_q.toRotationMatrix();
  out.translation = mean_translation;
  return out;
}

double euclidean_error(const RigidTransform& t_i, const RigidTransform& t_bar,
                       const Vec3& c) {
  return (t_i.apply(c) - t_bar.apply(c)).norm();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  const double cos_angle = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(cos_angle);
}

double angular_error(const RigidTransform& t_i, const RigidTransform& t_bar) {
  return rotation_angle_between(t_i.rotation, t_bar.rotation) * 180.0 / M_PI;
}

double rms(const std::vector<double>& values) {
  if (values.empty()) {
    throw Error("rms: empty list");
  }
  double sum_sq = 0.0;
  for (double v : values) sum_sq += v * v;
  return std::sqrt(sum_sq / static_cast<double>(values.size()));
}

}  // namespace vtrack
