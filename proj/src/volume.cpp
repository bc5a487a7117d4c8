#include "vtrack/volume.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace vtrack {

void Volume::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw Error("Volume: dims must be positive");
    if (!(spacing[a] > 0.0) || spacing[a] > 10.0) {
      throw Error("Volume: spacing components must lie in (0, 10] mm");
    }
  }
  if (!is_rotation(axes, 1e-6)) {
    throw Error("Volume: axes must be orthonormal with det +1 within 1e-6");
  }
  if (data.size() != voxel_count()) {
    throw Error("Volume: data length does not match dims");
  }
  if (!mask.empty() && mask.size() != voxel_count()) {
    throw Error("Volume: mask length does not match dims");
  }
}

namespace detail {

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw == 1 || n < 2 * hw) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(hw);
  const std::size_t chunk = (n + hw - 1) / hw;
  for (unsigned w = 0; w < hw; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace detail

namespace {

// Per-axis interpolation support: lower index and fraction, or nothing
// when the coordinate is out of support. Size-1 axes act as a slab of
// half-voxel thickness around index 0.
struct AxisSupport {
  int i0;
  double frac;
};

std::optional<AxisSupport> axis_support(double c, int n) {
  if (n == 1) {
    if (c < -0.5 || c > 0.5) return std::nullopt;
    return AxisSupport{0, 0.0};
  }
  if (c < 0.0 || c > static_cast<double>(n - 1)) return std::nullopt;
  int i0 = static_cast<int>(std::floor(c));
  if (i0 > n - 2) i0 = n - 2;  // c exactly at the last center
  return AxisSupport{i0, c - i0};
}

}  // namespace

std::optional<float> sample_trilinear(const Volume& v, const Vec3& point) {
  const Vec3 c = v.index_from_world(point);
  const auto sx = axis_support(c.x(), v.dims[0]);
  const auto sy = axis_support(c.y(), v.dims[1]);
  const auto sz = axis_support(c.z(), v.dims[2]);
  if (!sx || !sy || !sz) return std::nullopt;

  const int nx = v.dims[0] == 1 ? 1 : 2;
  const int ny = v.dims[1] == 1 ? 1 : 2;
  const int nz = v.dims[2] == 1 ? 1 : 2;

  double acc = 0.0;
  for (int dz = 0; dz < nz; ++dz) {
    const double wz = dz ? sz->frac : 1.0 - sz->frac;
    for (int dy = 0; dy < ny; ++dy) {
      const double wy = dy ? sy->frac : 1.0 - sy->frac;
      for (int dx = 0; dx < nx; ++dx) {
        const double wx = dx ? sx->frac : 1.0 - sx->frac;
        const std::size_t idx = v.index(sx->i0 + dx, sy->i0 + dy, sz->i0 + dz);
        if (!v.valid_at(idx)) return std::nullopt;
        acc += wx * wy * wz * static_cast<double>(v.data[idx]);
      }
    }
  }
  return static_cast<float>(acc);
}

Volume reslice(const Volume& source, const RigidTransform& transform,
               const VolumeGeometry& target) {
  Volume out;
  out.dims = target.dims;
  out.spacing = target.spacing;
  out.origin = target.origin;
  out.axes = target.axes;
  out.data.assign(out.voxel_count(), 0.0f);
  out.mask.assign(out.voxel_count(), 0);
  out.validate();

  const std::size_t slab = static_cast<std::size_t>(out.dims[0]) * out.dims[1];
  detail::parallel_for(static_cast<std::size_t>(out.dims[2]), [&](std::size_t k) {
    std::size_t idx = k * slab;
    for (int j = 0; j < out.dims[1]; ++j) {
      for (int i = 0; i < out.dims[0]; ++i, ++idx) {
        const Vec3 p = out.world_from_index(i, j, static_cast<double>(k));
        if (const auto s = sample_trilinear(source, transform.apply(p))) {
          out.data[idx] = *s;
          out.mask[idx] = 1;
        }
      }
    }
  });
  return out;
}

Volume gradient_magnitude(const Volume& v) {
  for (int a = 0; a < 3; ++a) {
    if (v.dims[a] != 1 && v.dims[a] < 3) {
      throw Error("gradient_magnitude: axes must have 1 or >= 3 voxels");
    }
  }
  Volume out;
  out.dims = v.dims;
  out.spacing = v.spacing;
  out.origin = v.origin;
  out.axes = v.axes;
  out.data.assign(v.voxel_count(), 0.0f);
  if (!v.mask.empty()) out.mask.assign(v.voxel_count(), 1);

  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  const std::array<std::size_t, 3> stride = {
      1, static_cast<std::size_t>(nx), static_cast<std::size_t>(nx) * ny};

  detail::parallel_for(static_cast<std::size_t>(nz), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const std::size_t idx = v.index(i, j, k);
        const std::array<int, 3> pos = {i, j, k};
        double sum_sq = 0.0;
        bool neighborhood_valid = v.valid_at(idx);
        for (int a = 0; a < 3; ++a) {
          const int n = v.dims[a];
          if (n == 1) continue;
          const int p = pos[a];
          std::size_t lo, hi;
          double step;
          if (p == 0) {
            lo = idx;
            hi = idx + stride[a];
            step = v.spacing[a];
          } else if (p == n - 1) {
            lo = idx - stride[a];
            hi = idx;
            step = v.spacing[a];
          } else {
            lo = idx - stride[a];
            hi = idx + stride[a];
            step = 2.0 * v.spacing[a];
          }
          if (!v.valid_at(lo) || !v.valid_at(hi)) neighborhood_valid = false;
          const double d = (static_cast<double>(v.data[hi]) - v.data[lo]) / step;
          sum_sq += d * d;
        }
        out.data[idx] = neighborhood_valid ? static_cast<float>(std::sqrt(sum_sq)) : 0.0f;
        if (!out.mask.empty() && !neighborhood_valid) out.mask[idx] = 0;
      }
    }
  });
  return out;
}

namespace {

// Separable binomial smoothing along one axis; kernel renormalized over the
// in-bounds, mask-valid taps so constants are preserved everywhere.
void smooth_axis(const std::array<int, 3>& dims, int axis,
                 const std::vector<float>& src, const std::vector<std::uint8_t>& mask,
                 std::vector<float>& dst) {
  static const double kKernel[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int n = dims[axis];
  if (n == 1) {
    dst = src;
    return;
  }
  const std::array<std::size_t, 3> stride = {
      1, static_cast<std::size_t>(dims[0]),
      static_cast<std::size_t>(dims[0]) * dims[1]};
  const int u_axis = axis == 0 ? 1 : 0;
  const int v_axis = axis == 2 ? 1 : 2;

  detail::parallel_for(static_cast<std::size_t>(dims[v_axis]), [&](std::size_t vi) {
    for (int ui = 0; ui < dims[u_axis]; ++ui) {
      const std::size_t base = vi * stride[v_axis] + static_cast<std::size_t>(ui) * stride[u_axis];
      for (int p = 0; p < n; ++p) {
        const std::size_t idx = base + static_cast<std::size_t>(p) * stride[axis];
        if (!mask.empty() && mask[idx] == 0) {
          dst[idx] = src[idx];
          continue;
        }
        double acc = 0.0, weight = 0.0;
        for (int t = -2; t <= 2; ++t) {
          const int q = p + t;
          if (q < 0 || q >= n) continue;
          const std::size_t qidx = base + static_cast<std::size_t>(q) * stride[axis];
          if (!mask.empty() && mask[qidx] == 0) continue;
          acc += kKernel[t + 2] * static_cast<double>(src[qidx]);
          weight += kKernel[t + 2];
        }
        dst[idx] = weight > 0.0 ? static_cast<float>(acc / weight) : src[idx];
      }
    }
  });
}

}  // namespace

std::vector<Volume> build_pyramid(const Volume& volume, int levels) {
  if (levels < 1) throw Error("build_pyramid: levels must be >= 1");
  // Check the whole ladder up front so no partial pyramid escapes.
  {
    std::array<int, 3> d = volume.dims;
    for (int l = 1; l < levels; ++l) {
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 1) continue;
        d[a] /= 2;
        if (d[a] < 4) {
          throw TooCoarse("build_pyramid: level " + std::to_string(l) +
                          " would shrink axis " + std::to_string(a) + " below 4");
        }
      }
    }
  }

  std::vector<Volume> pyramid;
  pyramid.reserve(static_cast<std::size_t>(levels));
  pyramid.push_back(volume);

  for (int l = 1; l < levels; ++l) {
    const Volume& fine = pyramid.back();

    std::vector<float> tmp_a(fine.data.size()), tmp_b(fine.data.size());
    smooth_axis(fine.dims, 0, fine.data, fine.mask, tmp_a);
    smooth_axis(fine.dims, 1, tmp_a, fine.mask, tmp_b);
    smooth_axis(fine.dims, 2, tmp_b, fine.mask, tmp_a);

    Volume coarse;
    coarse.axes = fine.axes;
    for (int a = 0; a < 3; ++a) {
      if (fine.dims[a] == 1) {
        coarse.dims[a] = 1;
        coarse.spacing[a] = fine.spacing[a];
      } else {
        coarse.dims[a] = fine.dims[a] / 2;
        coarse.spacing[a] = fine.spacing[a] * 2.0;
      }
    }
    coarse.origin = fine.origin;  // sampling at even indices keeps voxel 0 put
    coarse.data.assign(coarse.voxel_count(), 0.0f);
    if (!fine.mask.empty()) coarse.mask.assign(coarse.voxel_count(), 0);

    for (int k = 0; k < coarse.dims[2]; ++k) {
      for (int j = 0; j < coarse.dims[1]; ++j) {
        for (int i = 0; i < coarse.dims[0]; ++i) {
          const std::size_t cidx = coarse.index(i, j, k);
          coarse.data[cidx] = tmp_a[fine.index(
              fine.dims[0] == 1 ? 0 : 2 * i, fine.dims[1] == 1 ? 0 : 2 * j,
              fine.dims[2] == 1 ? 0 : 2 * k)];
          if (!fine.mask.empty()) {
            int valid = 0, total = 0;
            for (int dz = 0; dz < (fine.dims[2] == 1 ? 1 : 2); ++dz) {
              for (int dy = 0; dy < (fine.dims[1] == 1 ? 1 : 2); ++dy) {
                for (int dx = 0; dx < (fine.dims[0] == 1 ? 1 : 2); ++dx) {
                  const int fi = (fine.dims[0] == 1 ? 0 : 2 * i + dx);
                  const int fj = (fine.dims[1] == 1 ? 0 : 2 * j + dy);
                  const int fk = (fine.dims[2] == 1 ? 0 : 2 * k + dz);
                  if (fi >= fine.dims[0] || fj >= fine.dims[1] || fk >= fine.dims[2]) continue;
                  ++total;
                  if (fine.mask[fine.index(fi, fj, fk)]) ++valid;
                }
              }
            }
            coarse.mask[cidx] = (2 * valid >= total) ? 1 : 0;
          }
        }
      }
    }
    pyramid.push_back(std::move(coarse));
  }
  return pyramid;
}

void OrthoSlices::validate() const {
  if (planes.size() < 2 || planes.size() > 3) {
    throw Error("OrthoSlices: expected 2 or 3 planes");
  }
  std::vector<Vec3> normals;
  for (const auto& p : planes) {
    if (p.dims[2] != 1) throw Error("OrthoSlices: planes must have dims z = 1");
    normals.push_back(p.axes.col(2));
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    for (std::size_t j = i + 1; j < normals.size(); ++j) {
      if (std::abs(normals[i].dot(normals[j])) > 1e-6) {
        throw Error("OrthoSlices: plane normals must be pairwise orthogonal");
      }
    }
  }
  for (const auto& p : planes) {
    const Vec3 c = p.index_from_world(shared_origin);
    if (c.x() < -0.5 || c.x() > p.dims[0] - 0.5 || c.y() < -0.5 ||
        c.y() > p.dims[1] - 0.5 || std::abs(c.z()) > 0.5) {
      throw Error("OrthoSlices: shared_origin not within half a voxel of every plane");
    }
  }
}

OrthoSlices extract_ortho_slices(const Volume& volume, const Mat3& frame_axes,
                                 const Vec3& frame_origin) {
  if (!is_rotation(frame_axes, 1e-6)) {
    throw Error("extract_ortho_slices: frame axes must be a rotation");
  }
  {
    const Vec3 c = volume.index_from_world(frame_origin);
    for (int a = 0; a < 3; ++a) {
      if (c[a] < 0.0 || c[a] > volume.dims[a] - 1) {
        throw OutOfBounds("extract_ortho_slices: frame origin outside the volume");
      }
    }
  }

  const double spacing = volume.spacing.minCoeff();
  // Half-diagonal of the volume bounds how far any in-plane direction can
  // reach; one common size keeps the three planes congruent.
  const Vec3 extent(volume.spacing.x() * (volume.dims[0] - 1),
                    volume.spacing.y() * (volume.dims[1] - 1),
                    volume.spacing.z() * (volume.dims[2] - 1));
  const double half_diag = 0.5 * extent.norm();
  const int half_n = static_cast<int>(std::ceil(half_diag / spacing));
  const int n = 2 * half_n + 1;

  OrthoSlices out;
  out.shared_origin = frame_origin;
  for (int a = 0; a < 3; ++a) {
    const Vec3 normal = frame_axes.col(a);
    const Vec3 u = frame_axes.col((a + 1) % 3);
    const Vec3 v = frame_axes.col((a + 2) % 3);
    VolumeGeometry geom;
    geom.dims = {n, n, 1};
    geom.spacing = Vec3(spacing, spacing, spacing);
    geom.axes.col(0) = u;
    geom.axes.col(1) = v;
    geom.axes.col(2) = normal;
    geom.origin = frame_origin - half_n * spacing * u - half_n * spacing * v;
    out.planes.push_back(reslice(volume, RigidTransform::identity(), geom));
  }
  out.validate();
  return out;
}

}  // namespace vtrack
