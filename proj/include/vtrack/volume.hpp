#ifndef VTRACK_VOLUME_HPP
#define VTRACK_VOLUME_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "vtrack/transform.hpp"

namespace vtrack {

// Physical-space 3D scalar image. Voxel (i,j,k) is centered at
//   origin + axes * (i*spacing.x, j*spacing.y, k*spacing.z)
// with `axes` an orthonormal world-from-voxel rotation. Data is row-major
// with x fastest. An optional mask marks valid US data; mask-false voxels
// never contribute to sampling or statistics. Values are immutable after
// construction in all pipeline code; every operation here is a pure
// function of its inputs.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing = Vec3::Ones();   // mm, each component in (0, 10]
  Vec3 origin = Vec3::Zero();    // mm, world position of voxel (0,0,0) center
  Mat3 axes = Mat3::Identity();  // columns: voxel axes in world frame
  std::vector<float> data;       // dims[0]*dims[1]*dims[2], x fastest
  std::vector<std::uint8_t> mask;  // empty = all valid, else same length

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(k) * dims[1] * dims[0] +
           static_cast<std::size_t>(j) * dims[0] + i;
  }
  bool valid_at(std::size_t idx) const { return mask.empty() || mask[idx] != 0; }

  Vec3 world_from_index(double i, double j, double k) const {
    return origin + axes * Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
  }
  // Continuous voxel coordinates of a world point.
  Vec3 index_from_world(const Vec3& p) const {
    const Vec3 local = axes.transpose() * (p - origin);
    return Vec3(local.x() / spacing.x(), local.y() / spacing.y(),
                local.z() / spacing.z());
  }
  Vec3 world_center() const {
    return world_from_index((dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0,
                            (dims[2] - 1) / 2.0);
  }

  // Throws Error when the header fields violate the invariants
  // (orthonormal axes, positive spacing <= 10 mm, size mismatches).
  void validate() const;
};

// Target grid for reslicing: a Volume minus its payload.
struct VolumeGeometry {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing = Vec3::Ones();
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();

  static VolumeGeometry of(const Volume& v) {
    return {v.dims, v.spacing, v.origin, v.axes};
  }
};

// Trilinear interpolation of the 8 surrounding voxels; absent when the
// point falls outside the grid or any neighbor is mask-false. Axes of
// size 1 (single-slice volumes) interpolate as a half-voxel-thick slab.
// The result is rounded to f32 so cached and recomputed samples compare
// bit-exactly.
std::optional<float> sample_trilinear(const Volume& volume, const Vec3& point);

// Output voxel at world point p holds sample_trilinear(source, transform(p));
// absent samples become value 0 with mask false.
Volume reslice(const Volume& source, const RigidTransform& transform,
               const VolumeGeometry& target);

// Central differences in physical units (per mm), one-sided at boundaries,
// Euclidean norm of the three components. A mask-false voxel makes its
// stencil neighbors' outputs mask-false. Axes of size 1 contribute zero.
Volume gradient_magnitude(const Volume& volume);

// Gaussian pyramid: level 0 is the input; each next level smooths with the
// separable binomial kernel (1,4,6,4,1)/16 and decimates by 2 per axis,
// doubling spacing and keeping voxel (0,0,0) world-aligned. Masks downsample
// conservatively (valid only if at least half the children are valid).
// Axes of size 1 pass through untouched. Throws TooCoarse when any
// decimated axis would drop below 4.
std::vector<Volume> build_pyramid(const Volume& volume, int levels);

// Two or three single-slice volumes with pairwise orthogonal normals
// meeting at shared_origin.
struct OrthoSlices {
  std::vector<Volume> planes;
  Vec3 shared_origin = Vec3::Zero();

  void validate() const;
};

// Three single-voxel-thick slices through frame_origin, normal to each
// frame axis, resliced from the input. Throws OutOfBounds when the origin
// lies outside the volume.
OrthoSlices extract_ortho_slices(const Volume& volume, const Mat3& frame_axes,
                                 const Vec3& frame_origin);

namespace detail {
// Runs fn(i) for i in [0, n), splitting across hardware threads. fn must
// be safe to call concurrently on distinct indices.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);
}  // namespace detail

}  // namespace vtrack

#endif  // VTRACK_VOLUME_HPP
