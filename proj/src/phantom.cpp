#include "vtrack/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "vtrack/rng.hpp"

namespace vtrack {

namespace {

// Coverage of a primitive with signed distance d, blended over one voxel.
double edge_blend(double signed_distance_mm, double voxel_mm) {
  const double t = std::clamp((signed_distance_mm + 0.5 * voxel_mm) / voxel_mm, 0.0, 1.0);
  const double s = t * t * (3.0 - 2.0 * t);
  return 1.0 - s;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len_sq = ab.squaredNorm();
  if (len_sq <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Signed distance approximation to the gland ellipsoid (negative inside).
double ellipsoid_distance(const Vec3& p, const Vec3& center, const Vec3& semi) {
  const Vec3 q = (p - center).cwiseQuotient(semi);
  const double rho = q.norm();
  if (rho < 1e-12) return -semi.minCoeff();
  const Vec3 grad = q.cwiseQuotient(semi) / rho;
  return (rho - 1.0) / grad.norm();
}

// Structure intensity at a reference-frame point.
double structure_field(const PhantomSpec& spec, const Vec3& x, double voxel_mm) {
  double value = spec.exterior_intensity;
  {
    const double d = ellipsoid_distance(x, spec.gland_center, spec.gland_semi_axes);
    const double m = edge_blend(d, voxel_mm);
    value = value * (1.0 - m) + spec.interior_intensity * m;
  }
  {
    const double d =
        segment_distance(x, spec.urethra_p0, spec.urethra_p1) - spec.urethra_radius_mm;
    const double m = edge_blend(d, voxel_mm);
    value = value * (1.0 - m) + spec.urethra_intensity * m;
  }
  for (const auto& needle : spec.needle_tracks) {
    const Vec3 tip = needle.entry + needle.length_mm * needle.direction;
    const double d = segment_distance(x, needle.entry, tip) - spec.needle_radius_mm;
    const double m = edge_blend(d, voxel_mm);
    value = value * (1.0 - m) + spec.needle_intensity * m;
  }
  // Calcifications last so their centers hold the exact brightness.
  for (const auto& calc : spec.calcifications) {
    const double d = (x - calc.center).norm() - calc.radius_mm;
    const double m = edge_blend(d, voxel_mm);
    value = value * (1.0 - m) + calc.brightness * m;
  }
  return value;
}

// Correlated unit-variance speckle lattice: white noise hashed per site,
// blurred with a sigma = 1.5 voxel Gaussian (about a 3-voxel correlation
// length), renormalized analytically.
std::vector<float> speckle_field(const std::array<int, 3>& dims, std::uint64_t seed) {
  const std::size_t n =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<float> field(n);
  detail::parallel_for(n, [&](std::size_t i) {
    field[i] = static_cast<float>(site_gaussian(seed, i));
  });

  constexpr int kRadius = 4;
  constexpr double kSigma = 1.5;
  double weights[2 * kRadius + 1];
  double sum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    weights[i + kRadius] = std::exp(-0.5 * (i / kSigma) * (i / kSigma));
    sum += weights[i + kRadius];
  }
  double sum_sq = 0.0;
  for (double& w : weights) {
    w /= sum;
    sum_sq += w * w;
  }
  const double renorm = 1.0 / std::sqrt(sum_sq * sum_sq * sum_sq);

  const std::array<std::size_t, 3> stride = {
      1, static_cast<std::size_t>(dims[0]),
      static_cast<std::size_t>(dims[0]) * dims[1]};
  std::vector<float> tmp(n);
  for (int axis = 0; axis < 3; ++axis) {
    const int len = dims[axis];
    const int u_axis = axis == 0 ? 1 : 0;
    const int v_axis = axis == 2 ? 1 : 2;
    detail::parallel_for(static_cast<std::size_t>(dims[v_axis]), [&](std::size_t vi) {
      for (int ui = 0; ui < dims[u_axis]; ++ui) {
        const std::size_t base =
            vi * stride[v_axis] + static_cast<std::size_t>(ui) * stride[u_axis];
        for (int p = 0; p < len; ++p) {
          double acc = 0.0;
          for (int t = -kRadius; t <= kRadius; ++t) {
            const int q = std::clamp(p + t, 0, len - 1);
            acc += weights[t + kRadius] *
                   field[base + static_cast<std::size_t>(q) * stride[axis]];
          }
          tmp[base + static_cast<std::size_t>(p) * stride[axis]] =
              static_cast<float>(acc);
        }
      }
    });
    std::swap(field, tmp);
  }
  for (float& v : field) v = static_cast<float>(v * renorm);
  return field;
}

}  // namespace

PhantomSpec PhantomSpec::default_spec() {
  PhantomSpec spec;
  const Vec3 c = spec.gland_center;
  // Clearly visible calcifications, spread wide and asymmetric so no two
  // probe rolls look alike even at the coarsest pyramid level.
  spec.calcifications = {
      {c + Vec3(9.0, 5.0, -6.0), 3.6, 235.0},
      {c + Vec3(-10.0, -4.0, 7.0), 3.2, 225.0},
      {c + Vec3(4.0, -9.0, -8.0), 3.0, 230.0},
      {c + Vec3(-6.0, 8.0, 8.0), 3.4, 240.0},
      {c + Vec3(11.0, -2.0, 6.0), 2.8, 228.0},
  };
  spec.needle_tracks = {
      {c + Vec3(10.0, -6.0, -14.0), Vec3(-0.5, 0.35, 0.79).normalized(), 30.0},
      {c + Vec3(-9.0, 2.0, -13.0), Vec3(0.45, -0.2, 0.87).normalized(), 28.0},
  };
  return spec;
}

ProbeMovementModel phantom_probe_model(const PhantomSpec& spec, const Vec3& probe_axis,
                                       double fp_distance_mm) {
  return consistent_model(spec.bbox_lo(), spec.bbox_hi(), probe_axis, fp_distance_mm);
}

void attach_beam_cone(PhantomSpec& spec, const ProbeMovementModel& model,
                      double beam_tilt_deg, double standoff_mm) {
  const Vec3 pole = model.probe_origin_ref;
  const Vec3 forward = (model.ellipsoid_center - model.fp_rect).normalized();
  // Transverse seed: the stable direction least parallel to the probe axis.
  int seed_axis = 0;
  double best = std::abs(forward.x());
  for (int a = 1; a < 3; ++a) {
    if (std::abs(forward[a]) < best) {
      best = std::abs(forward[a]);
      seed_axis = a;
    }
  }
  const Vec3 e = Vec3::Unit(seed_axis);
  const Vec3 transverse = (e - e.dot(forward) * forward).normalized();
  spec.cone_axis =
      Eigen::AngleAxisd(beam_tilt_deg * M_PI / 180.0, transverse) * forward;
  spec.cone_apex = pole - standoff_mm * spec.cone_axis;
  spec.cone_wide_dir =
      (transverse - transverse.dot(spec.cone_axis) * spec.cone_axis).normalized();
}

RenderedPhantom render_phantom(const PhantomSpec& spec, const RigidTransform& pose,
                               const PhantomGeometry& geometry) {
  if (spec.speckle_sigma < 0.0 || spec.speckle_sigma >= 1.0) {
    throw Error("render_phantom: speckle_sigma must lie in [0, 1)");
  }
  if (spec.cone_half_angle_deg <= 0.0 || spec.cone_half_angle_deg >= 90.0) {
    throw Error("render_phantom: cone half-angle must lie in (0, 90) degrees");
  }

  Volume vol;
  vol.dims = geometry.dims;
  vol.spacing = geometry.spacing;
  vol.origin = geometry.origin;
  vol.data.assign(vol.voxel_count(), 0.0f);
  vol.mask.assign(vol.voxel_count(), 0);

  const double voxel_mm = geometry.spacing.minCoeff();
  const bool noisy = spec.speckle_sigma > 0.0;
  std::vector<float> speckle;
  double gain = 1.0, offset = 0.0;
  if (noisy) {
    speckle = speckle_field(vol.dims, spec.seed);
    Rng rng(spec.seed ^ 0x5eedf00dULL);
    gain = rng.uniform(0.8, 1.2);
    offset = rng.uniform(-10.0, 10.0);
  }

  const double tan_narrow = std::tan(spec.cone_half_angle_deg * M_PI / 180.0);
  const double tan_wide = std::tan(spec.cone_wide_half_angle_deg * M_PI / 180.0);
  const Vec3 cone_axis = spec.cone_axis.normalized();
  const Vec3 wide_dir =
      (spec.cone_wide_dir - spec.cone_wide_dir.dot(cone_axis) * cone_axis).normalized();
  const Vec3 narrow_dir = cone_axis.cross(wide_dir);
  // Shadow azimuth basis, fixed in the image frame.
  Vec3 s1, s2;
  {
    int seed_axis = 0;
    double best = std::abs(cone_axis.x());
    for (int a = 1; a < 3; ++a) {
      if (std::abs(cone_axis[a]) < best) {
        best = std::abs(cone_axis[a]);
        seed_axis = a;
      }
    }
    const Vec3 e = Vec3::Unit(seed_axis);
    s1 = (e - e.dot(cone_axis) * cone_axis).normalized();
    s2 = cone_axis.cross(s1);
  }

  const std::size_t slab = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1];
  detail::parallel_for(static_cast<std::size_t>(vol.dims[2]), [&](std::size_t k) {
    std::size_t idx = k * slab;
    for (int j = 0; j < vol.dims[1]; ++j) {
      for (int i = 0; i < vol.dims[0]; ++i, ++idx) {
        const Vec3 q = vol.world_from_index(i, j, static_cast<double>(k));

        const Vec3 rel = q - spec.cone_apex;
        const double along = rel.dot(cone_axis);
        if (along < 0.0 || along > spec.cone_depth_mm) continue;
        if (rel.norm() > 1e-12) {
          const double w = rel.dot(wide_dir) / std::max(1e-12, along * tan_wide);
          const double n = rel.dot(narrow_dir) / std::max(1e-12, along * tan_narrow);
          if (w * w + n * n > 1.0) continue;
        }

        double value = structure_field(spec, pose.apply(q), voxel_mm);
        if (!spec.shadow_sectors.empty()) {
          const double az = std::atan2(rel.dot(s2), rel.dot(s1)) * 180.0 / M_PI;
          for (const auto& sector : spec.shadow_sectors) {
            if (az >= sector.azimuth_lo_deg && az <= sector.azimuth_hi_deg) {
              value *= sector.attenuation;
            }
          }
        }
        if (noisy) {
          value *= 1.0 + spec.speckle_sigma * speckle[idx];
          value = gain * value + offset;
        }
        vol.data[idx] = static_cast<float>(value);
        vol.mask[idx] = 1;
      }
    }
  });

  RenderedPhantom out;
  out.volume = std::move(vol);
  out.scene.spec = spec;
  out.scene.true_pose = invert(pose);
  for (const auto& calc : spec.calcifications) {
    out.scene.calc_ref.push_back(calc.center);
    out.scene.calc_acq.push_back(out.scene.true_pose.apply(calc.center));
  }
  for (const auto& needle : spec.needle_tracks) {
    out.scene.needle_entry_ref.push_back(needle.entry);
    out.scene.needle_dir_ref.push_back(needle.direction);
    out.scene.needle_entry_acq.push_back(out.scene.true_pose.apply(needle.entry));
    out.scene.needle_dir_acq.push_back(out.scene.true_pose.rotation * needle.direction);
  }
  // Ground-truth consistency is structural; guard it anyway.
  for (std::size_t i = 0; i < out.scene.calc_ref.size(); ++i) {
    if ((out.scene.calc_acq[i] - out.scene.true_pose.apply(out.scene.calc_ref[i])).norm() >
        1e-9) {
      throw Error("render_phantom: landmark consistency violated");
    }
  }
  return out;
}

PlausiblePose sample_plausible_pose(const ProbeMovementModel& model,
                                    const PoseRanges& ranges, std::uint64_t seed) {
  Rng rng(seed);
  ProbePose pose;
  pose.lambda = ranges.lambda_max <= 0.0
                    ? 0.0
                    : -ranges.lambda_max + 2.0 * ranges.lambda_max * rng.next_double();
  const Vec3 pole = surface_point(model, 0.0, 0.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double a =
        ranges.tilt_max <= 0.0 ? 0.0 : rng.uniform(-ranges.tilt_max, ranges.tilt_max);
    const double b =
        ranges.tilt_max <= 0.0 ? 0.0 : rng.uniform(-ranges.tilt_max, ranges.tilt_max);
    if ((surface_point(model, a, b) - pole).norm() <= ranges.slide_max_mm ||
        ranges.tilt_max <= 0.0) {
      pose.alpha = a;
      pose.beta = b;
      break;
    }
  }

  RigidTransform t = pose_to_transform(model, pose);
  if (ranges.perturb_translation_mm > 0.0 || ranges.perturb_rotation_deg > 0.0) {
    Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
    if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
    const double angle =
        rng.next_double() * ranges.perturb_rotation_deg * M_PI / 180.0;
    RigidTransform delta = rotation_about(axis.normalized(), angle, model.ellipsoid_center);
    Vec3 dir(rng.gaussian(), rng.gaussian(), rng.gaussian());
    if (dir.norm() < 1e-12) dir = Vec3::UnitX();
    const double radius =
        ranges.perturb_translation_mm * std::cbrt(rng.next_double());
    delta.translation += radius * dir.normalized();
    t = compose(delta, t);
  }
  return {t, pose};
}

LandmarkErrors landmark_errors(const PhantomScene& scene, const RigidTransform& estimated) {
  if (scene.calc_ref.empty() && scene.needle_dir_ref.empty()) {
    throw NoLandmarks("landmark_errors: scene has no landmarks");
  }
  LandmarkErrors out;
  for (std::size_t i = 0; i < scene.calc_ref.size(); ++i) {
    out.calc_distances_mm.push_back(
        (estimated.apply(scene.calc_ref[i]) - scene.calc_acq[i]).norm());
  }
  for (std::size_t i = 0; i < scene.needle_dir_ref.size(); ++i) {
    const Vec3 mapped = estimated.rotation * scene.needle_dir_ref[i];
    const double cos_angle =
        std::clamp(mapped.dot(scene.needle_dir_acq[i]), -1.0, 1.0);
    out.needle_angles_deg.push_back(std::acos(cos_angle) * 180.0 / M_PI);
  }
  return out;
}

}  // namespace vtrack
