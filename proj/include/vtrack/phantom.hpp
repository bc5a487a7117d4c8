#ifndef VTRACK_PHANTOM_HPP
#define VTRACK_PHANTOM_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "vtrack/probe_model.hpp"
#include "vtrack/transform.hpp"
#include "vtrack/volume.hpp"

namespace vtrack {

// Synthetic TRUS-like prostate scene description. All positions are in
// reference (anatomy) coordinates unless stated otherwise; the cone and
// shadow sectors live in acquisition image coordinates because beam
// geometry travels with the probe.
struct Calcification {
  Vec3 center = Vec3::Zero();
  double radius_mm = 2.0;
  double brightness = 230.0;
};

struct NeedleTrack {
  Vec3 entry = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit
  double length_mm = 30.0;
};

struct ShadowSector {
  double azimuth_lo_deg = 0.0;  // around the beam axis
  double azimuth_hi_deg = 0.0;
  double attenuation = 0.3;  // multiplies intensity inside the sector
};

struct PhantomSpec {
  Vec3 gland_semi_axes = Vec3(20.0, 15.0, 19.0);
  Vec3 gland_center = Vec3(25.6, 25.6, 25.6);

  Vec3 urethra_p0 = Vec3(22.6, 23.6, 9.6);
  Vec3 urethra_p1 = Vec3(28.1, 29.1, 41.6);
  double urethra_radius_mm = 3.0;
  double urethra_intensity = 35.0;

  std::vector<Calcification> calcifications;
  std::vector<NeedleTrack> needle_tracks;
  double needle_radius_mm = 0.8;
  double needle_intensity = 180.0;

  double interior_intensity = 70.0;
  double exterior_intensity = 115.0;

  // Multiplicative speckle strength in [0, 1). Zero disables the whole
  // noise model including the per-acquisition intensity shift.
  double speckle_sigma = 0.3;

  // US beam, acquisition image frame: an elliptical cone like a volume
  // probe's swept fan, wide along the sweep plane and narrower across it.
  // Rolling the probe turns the narrow plane, which is what lets three
  // rolled acquisitions cover the whole gland.
  Vec3 cone_apex = Vec3::Zero();
  Vec3 cone_axis = Vec3::UnitZ();
  Vec3 cone_wide_dir = Vec3::UnitX();    // sweep plane direction, unit, orthogonal to axis
  double cone_half_angle_deg = 45.0;     // narrow (cross-sweep) half-angle
  double cone_wide_half_angle_deg = 70.0;
  double cone_depth_mm = 85.0;
  std::vector<ShadowSector> shadow_sectors;

  std::uint64_t seed = 1;

  Vec3 bbox_lo() const { return gland_center - gland_semi_axes; }
  Vec3 bbox_hi() const { return gland_center + gland_semi_axes; }

  // Library defaults: asymmetric calcifications and two needle tracks so a
  // rolled acquisition is never confusable with the reference.
  static PhantomSpec default_spec();
};

struct PhantomGeometry {
  std::array<int, 3> dims{128, 128, 128};
  Vec3 spacing = Vec3(0.4, 0.4, 0.4);
  Vec3 origin = Vec3(0.2, 0.2, 0.2);

  static PhantomGeometry default_geometry() { return {}; }
};

// Ground truth attached to one rendered acquisition. true_pose maps
// reference-frame positions to acquisition-frame positions; it is the
// transform a registration of this acquisition against the reference
// should recover.
struct PhantomScene {
  PhantomSpec spec;
  RigidTransform true_pose;
  std::vector<Vec3> calc_ref, calc_acq;
  std::vector<Vec3> needle_entry_ref, needle_entry_acq;
  std::vector<Vec3> needle_dir_ref, needle_dir_acq;
};

// Renders one acquisition: the analytic structure field (gland, urethra,
// needles, calcifications; smoothstep edges one voxel wide) is evaluated at
// pose-transformed voxel centers, multiplied by seeded correlated speckle,
// shadow-attenuated and cone-masked. `pose` maps acquisition image
// coordinates to reference coordinates; the returned scene's true_pose is
// its inverse. Bit-identical for identical (spec, pose, geometry).
struct RenderedPhantom {
  Volume volume;
  PhantomScene scene;
};
RenderedPhantom render_phantom(const PhantomSpec& spec, const RigidTransform& pose,
                               const PhantomGeometry& geometry);

// The probe movement model matching a phantom's gland and beam geometry.
// The cone apex of `spec` is expected at the model's pole point.
ProbeMovementModel phantom_probe_model(const PhantomSpec& spec, const Vec3& probe_axis,
                                       double fp_distance_mm);

// Places the beam fan of `spec` looking from the model's pole toward the
// gland, optionally tilted off the probe axis, with the apex standoff_mm
// behind the contact point.
void attach_beam_cone(PhantomSpec& spec, const ProbeMovementModel& model,
                      double beam_tilt_deg, double standoff_mm = 12.0);

struct PoseRanges {
  double lambda_max = M_PI;          // radians
  double tilt_max = 40.0 * M_PI / 180.0;
  double slide_max_mm = 30.0;
  double perturb_translation_mm = 2.0;  // off-model error, 0 disables
  double perturb_rotation_deg = 2.0;
};

// Uniform pose within the ranges mapped through pose_to_transform, plus an
// optional small off-model perturbation about the gland center. Returns the
// exact sampling transform (to hand to render_phantom) and the generating
// pose. Deterministic per seed.
struct PlausiblePose {
  RigidTransform transform;
  ProbePose pose;
};
PlausiblePose sample_plausible_pose(const ProbeMovementModel& model,
                                    const PoseRanges& ranges, std::uint64_t seed);

// Per-calcification distances (mm) and per-needle direction angles
// (degrees) between the estimate's image of the reference landmarks and the
// acquisition-frame truth. Throws NoLandmarks when the scene has neither.
struct LandmarkErrors {
  std::vector<double> calc_distances_mm;
  std::vector<double> needle_angles_deg;
};
LandmarkErrors landmark_errors(const PhantomScene& scene, const RigidTransform& estimated);

}  // namespace vtrack

#endif  // VTRACK_PHANTOM_HPP
