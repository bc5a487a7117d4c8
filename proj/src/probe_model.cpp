#include "vtrack/probe_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace vtrack {

namespace {

// Radius along unit direction v from the ellipsoid center to the surface.
double radial_scale(const Vec3& semi_axes, const Vec3& v) {
  const Vec3 q = v.cwiseQuotient(semi_axes);
  return 1.0 / q.norm();
}

// Tangent basis at the pole, seeded from the world axis least parallel to
// the pole direction.
void pole_frame(const Vec3& pole_dir, Vec3& t1, Vec3& t2) {
  int seed = 0;
  double best = std::abs(pole_dir.x());
  for (int a = 1; a < 3; ++a) {
    const double dot = std::abs(pole_dir[a]);
    if (dot < best) {
      best = dot;
      seed = a;
    }
  }
  const Vec3 e = Vec3::Unit(seed);
  t1 = (e - e.dot(pole_dir) * pole_dir).normalized();
  t2 = pole_dir.cross(t1);
}

// Minimal rotation taking unit vector a to unit vector b.
Mat3 minimal_rotation(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(a.dot(b), -1.0, 1.0);
  const Vec3 axis = a.cross(b);
  const double s = axis.norm();
  if (s < 1e-15) {
    if (c > 0.0) return Mat3::Identity();
    throw Error("minimal_rotation: antipodal directions");
  }
  return Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
}

}  // namespace

ProbeMovementModel build_model(const Vec3& bbox_lo, const Vec3& bbox_hi,
                               const Vec3& fp_rect, const Vec3& probe_origin_ref,
                               const Vec3& probe_axis_ref) {
  if ((bbox_hi.array() <= bbox_lo.array()).any()) {
    throw Error("build_model: empty bounding box");
  }
  if (std::abs(probe_axis_ref.norm() - 1.0) > 1e-9) {
    throw Error("build_model: probe axis must be unit length");
  }
  ProbeMovementModel model;
  model.ellipsoid_center = 0.5 * (bbox_lo + bbox_hi);
  model.semi_axes = 0.5 * (bbox_hi - bbox_lo);
  model.fp_rect = fp_rect;
  model.probe_origin_ref = probe_origin_ref;
  model.probe_axis_ref = probe_axis_ref;
  if (model.ellipsoid_rho(fp_rect) <= 1.0) {
    throw FixedPointInside("build_model: rectal fixed point inside the ellipsoid");
  }
  return model;
}

ProbeMovementModel consistent_model(const Vec3& bbox_lo, const Vec3& bbox_hi,
                                    const Vec3& probe_axis, double fp_distance) {
  const Vec3 axis = probe_axis.normalized();
  const Vec3 center = 0.5 * (bbox_lo + bbox_hi);
  const Vec3 fp = center - fp_distance * axis;
  // Pole point: center-to-fp ray meets the ellipsoid.
  const Vec3 semi = 0.5 * (bbox_hi - bbox_lo);
  const Vec3 d = (fp - center).normalized();
  const Vec3 pole = center + radial_scale(semi, d) * d;
  return build_model(bbox_lo, bbox_hi, fp, pole, axis);
}

Vec3 surface_point(const ProbeMovementModel& model, double alpha, double beta) {
  const Vec3 d = (model.fp_rect - model.ellipsoid_center).normalized();
  Vec3 t1, t2;
  pole_frame(d, t1, t2);
  const double theta = std::hypot(alpha, beta);
  Vec3 v;
  if (theta < 1e-15) {
    v = d;
  } else {
    v = std::cos(theta) * d + std::sin(theta) * (alpha * t1 + beta * t2) / theta;
  }
  return model.ellipsoid_center + radial_scale(model.semi_axes, v) * v;
}

RigidTransform pose_to_transform(const ProbeMovementModel& model, const ProbePose& pose) {
  const Vec3 pole = surface_point(model, 0.0, 0.0);
  const Vec3 target = surface_point(model, pose.alpha, pose.beta);
  const Vec3 axis0 = (model.fp_rect - pole).normalized();
  const Vec3 axis = (model.fp_rect - target).normalized();

  const Mat3 align = minimal_rotation(axis0, axis);
  const Mat3 roll = Eigen::AngleAxisd(pose.lambda, axis).toRotationMatrix();

  RigidTransform out;
  out.rotation = roll * align;
  out.translation = target - out.rotation * pole;
  return out;
}

ExplorationGrid generate_grid(const ProbeMovementModel& model, int n_alpha, int n_beta,
                              int n_lambda, double tilt_limit) {
  if (n_alpha < 1 || n_beta < 1 || n_lambda < 1) {
    throw Error("generate_grid: step counts must be >= 1");
  }
  ExplorationGrid grid;
  grid.steps = {n_alpha, n_beta, n_lambda};
  grid.tilt_limit = tilt_limit;
  grid.poses.reserve(static_cast<std::size_t>(n_alpha) * n_beta * n_lambda);

  const auto tilt_at = [tilt_limit](int i, int n) {
    return n == 1 ? 0.0 : -tilt_limit + 2.0 * tilt_limit * i / (n - 1);
  };
  for (int ia = 0; ia < n_alpha; ++ia) {
    for (int ib = 0; ib < n_beta; ++ib) {
      for (int il = 0; il < n_lambda; ++il) {
        ProbePose pose;
        pose.alpha = tilt_at(ia, n_alpha);
        pose.beta = tilt_at(ib, n_beta);
        pose.lambda = -M_PI + 2.0 * M_PI * (il + 1) / n_lambda;
        grid.poses.push_back(pose);
      }
    }
  }
  grid.transforms.reserve(grid.poses.size());
  for (const auto& pose : grid.poses) {
    grid.transforms.push_back(pose_to_transform(model, pose));
  }
  return grid;
}

ExplorationGrid precompute_cache(ExplorationGrid grid, const Volume& reference_level,
                                 const Volume& reference_grad_level,
                                 const std::vector<Vec3>& points, const Vec3& bbox_lo,
                                 const Vec3& bbox_hi) {
  if (points.empty()) throw Error("precompute_cache: empty point lattice");
  auto cache = std::make_shared<PoseCache>();
  cache->n_poses = grid.poses.size();
  cache->n_points_int = points.size();
  cache->n_points_grad = points.size();
  cache->intensity.assign(cache->n_poses * cache->n_points_int,
                          std::numeric_limits<float>::quiet_NaN());
  cache->gradient.assign(cache->n_poses * cache->n_points_grad,
                         std::numeric_limits<float>::quiet_NaN());

  detail::parallel_for(grid.poses.size(), [&](std::size_t p) {
    const RigidTransform& t = grid.transforms[p];
    float* row_int = cache->intensity.data() + p * cache->n_points_int;
    float* row_grad = cache->gradient.data() + p * cache->n_points_grad;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 x = t.apply(points[i]);
      if ((x.array() < bbox_lo.array()).any() || (x.array() > bbox_hi.array()).any()) {
        continue;
      }
      if (const auto s = sample_trilinear(reference_level, x)) row_int[i] = *s;
      if (const auto g = sample_trilinear(reference_grad_level, x)) row_grad[i] = *g;
    }
  });

  grid.cache = std::move(cache);
  return grid;
}

namespace {

constexpr char kCacheMagic[8] = {'V', 'T', 'C', 'A', 'C', 'H', 'E', '1'};

void put_u64le(std::ofstream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

std::uint64_t get_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_cache(const PoseCache& cache, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("write_cache: cannot open '" + path + "'");
  out.write(kCacheMagic, 8);
  put_u64le(out, cache.n_poses);
  put_u64le(out, cache.n_points_int);
  put_u64le(out, cache.n_points_grad);
  const auto write_f32 = [&out](const std::vector<float>& v) {
    for (float x : v) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      char buf[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
      out.write(buf, 4);
    }
  };
  write_f32(cache.intensity);
  write_f32(cache.gradient);
  if (!out) throw Error("write_cache: short write to '" + path + "'");
}

PoseCache read_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_cache: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 32 || std::memcmp(buf.data(), kCacheMagic, 8) != 0) {
    throw FormatError("VTCACHE1: bad magic", 0);
  }
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data());
  PoseCache cache;
  cache.n_poses = get_u64le(p + 8);
  cache.n_points_int = get_u64le(p + 16);
  cache.n_points_grad = get_u64le(p + 24);
  const std::size_t n_int = cache.n_poses * cache.n_points_int;
  const std::size_t n_grad = cache.n_poses * cache.n_points_grad;
  const std::size_t expected = 32 + 4 * (n_int + n_grad);
  if (buf.size() != expected) {
    throw FormatError("VTCACHE1: payload size mismatch", buf.size());
  }
  const auto read_f32 = [&](std::size_t offset, std::size_t count) {
    std::vector<float> v(count);
    const unsigned char* q = p + offset;
    for (std::size_t i = 0; i < count; ++i, q += 4) {
      const std::uint32_t bits = static_cast<std::uint32_t>(q[0]) |
                                 (static_cast<std::uint32_t>(q[1]) << 8) |
                                 (static_cast<std::uint32_t>(q[2]) << 16) |
                                 (static_cast<std::uint32_t>(q[3]) << 24);
      std::memcpy(&v[i], &bits, 4);
    }
    return v;
  };
  cache.intensity = read_f32(32, n_int);
  cache.gradient = read_f32(32 + 4 * n_int, n_grad);
  return cache;
}

}  // namespace vtrack
