#ifndef VTRACK_PIPELINE_HPP
#define VTRACK_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "vtrack/optimizer.hpp"
#include "vtrack/probe_model.hpp"
#include "vtrack/similarity.hpp"
#include "vtrack/transform.hpp"
#include "vtrack/volume.hpp"

namespace vtrack {

enum class RegistrationMode { ThreeDThreeD, ThreeDO2D };

struct GridConfig {
  int n_alpha = 20;
  int n_beta = 18;
  int n_lambda = 36;  // 20*18*36 = 12960 poses
  double tilt_limit_deg = 45.0;
};

// Probe geometry handed to the movement model; the axis points from the
// rectum toward the gland and the fixed point sits fp_distance_mm behind
// the gland center along it.
struct ProbeConfig {
  Vec3 axis = default_probe_axis();
  double fp_distance_mm = 45.0;

  static Vec3 default_probe_axis() { return Vec3(0.28, 0.42, 0.86).normalized(); }
};

struct RegistrationConfig {
  RegistrationMode mode = RegistrationMode::ThreeDThreeD;
  int pyramid_levels = 5;
  int final_level = 2;  // third-finest of five
  GridConfig grid;
  int candidate_count = 5;
  double candidate_min_distance_mm = 5.0;
  double candidate_min_distance_deg = 10.0;
  int attribute_level_cutoff = 2;  // gradient term active on levels >= this
  double min_overlap = 0.25;
  OptimizerConfig optimizer;
  ProbeConfig probe;
  // When set, composed onto the stage-4 start transform (reproducibility
  // studies perturb here).
  std::optional<RigidTransform> stage4_start_perturbation;

  static RegistrationConfig defaults(RegistrationMode mode);
  void validate() const;
};

struct CandidateRecord {
  ProbePose pose;
  double exploration_energy = 0.0;
  RigidTransform refined;  // reference-to-acquisition convention, as in results
  double refined_energy = 0.0;
};

struct LevelTrace {
  int level = 0;
  double start_energy = 0.0;
  double end_energy = 0.0;
  bool converged = false;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct RegistrationResult {
  // Maps reference-frame positions to tracking-acquisition positions; the
  // quantity compared against phantom ground truth.
  RigidTransform transform;
  double final_energy = 0.0;
  std::vector<CandidateRecord> candidates;  // ascending refined energy
  std::vector<LevelTrace> level_trace;
  std::vector<StageTiming> stage_timings;
  bool converged = false;
  std::optional<std::string> failure_reason;
};

// Mean-compounds acquisitions into the common reference frame; poses map
// each acquisition's image coordinates into that frame. The output grid is
// the axis-aligned bounding geometry of the transformed inputs at the
// finest input spacing. Throws NoOverlap when the pairwise-overlap graph is
// disconnected.
Volume compound_panorama(const std::vector<Volume>& acquisitions,
                         const std::vector<RigidTransform>& poses);

// Greedy minimum-energy candidate selection: poses are taken in ascending
// energy order, skipping any whose gland-center displacement AND relative
// rotation against an already-selected pose both fall below the thresholds.
std::vector<int> select_candidates(const std::vector<double>& energies,
                                   const std::vector<RigidTransform>& transforms,
                                   const Vec3& center, double min_distance_mm,
                                   double min_distance_deg, int count);

// Fixed side of the pipeline's energy: one pyramid level of the tracking
// acquisition, laid out on its own lattice (probe-frame, so it is known
// before the intervention). NaN marks voxels outside the beam. Which points
// participate in a similarity evaluation depends on the pose: only those
// whose transformed position falls inside the reference prostate box pair
// up, and the overlap fraction is measured against the identity-pose
// capacities below.
struct TrackingDomain {
  std::vector<Vec3> points;
  std::vector<float> values;
  std::vector<float> grad_values;
  long long capacity_int = 0;
  long long capacity_grad = 0;
};

// All voxel centers of `level` with its values; gradient values from
// grad_level. Capacities count the in-box valid points at identity.
TrackingDomain make_tracking_domain(const Volume& level, const Volume& grad_level,
                                    const Vec3& bbox_lo, const Vec3& bbox_hi);
// o2D variant: the planes' voxel centers at one pyramid level.
TrackingDomain make_plane_domain(const std::vector<Volume>& plane_levels,
                                 const Vec3& bbox_lo, const Vec3& bbox_hi);

// The staged search's energy at one level: the attribute energy (or plain
// 1 - CC below the cutoff) over tracking points whose image under
// `ref_from_acq` lands inside the box; +infinity when undefined.
double level_energy(const Volume& reference_level, const Volume& reference_grad_level,
                    const TrackingDomain& domain, const Vec3& bbox_lo,
                    const Vec3& bbox_hi, const RigidTransform& ref_from_acq,
                    bool use_attribute, double min_overlap);

struct ExplorationCandidate {
  int pose_index = -1;
  ProbePose pose;
  RigidTransform sampling_transform;  // acquisition-to-reference, energy side
  double energy = 0.0;
};

// Evaluates the exploration energy at every grid pose (from grid.cache when
// present, bit-identical to sampling) and applies the pruning rule. Throws
// AllUndefined when no pose yields a defined energy.
std::vector<ExplorationCandidate> systematic_exploration(
    const Volume& reference_level, const Volume& reference_grad_level,
    const TrackingDomain& domain, const Vec3& bbox_lo, const Vec3& bbox_hi,
    const ExplorationGrid& grid, const RegistrationConfig& config);

// Full staged registration: pyramids, systematic exploration on the
// coarsest level, Powell refinement of each pruned candidate there, then a
// coarse-to-final_level multi-level Powell search seeded by the best
// candidate. An optional precomputed cache (from precompute for this
// reference, bbox and config) accelerates exploration.
RegistrationResult register_volumes(const Volume& reference, const Vec3& bbox_lo,
                                    const Vec3& bbox_hi, const Volume& tracking,
                                    const RegistrationConfig& config,
                                    const PoseCache* cache = nullptr);

RegistrationResult register_slices(const Volume& reference, const Vec3& bbox_lo,
                                   const Vec3& bbox_hi, const OrthoSlices& tracking,
                                   const RegistrationConfig& config);

// The geometry of one pyramid level, derived without building the image.
VolumeGeometry pyramid_level_geometry(VolumeGeometry geometry, int level);

// The lattice the cache columns live on: every voxel center of a level.
std::vector<Vec3> cache_lattice(const VolumeGeometry& level_geometry);

// Builds the cache a registration against this reference would use for
// acquisitions with the given geometry (the coarsest-level lattice of that
// geometry is the cache's column space).
PoseCache precompute_reference_cache(const Volume& reference, const Vec3& bbox_lo,
                                     const Vec3& bbox_hi,
                                     const VolumeGeometry& acquisition_geometry,
                                     const RegistrationConfig& config);

struct SuccessReport {
  bool success = false;
  double eps_e_mm = 0.0;
  double eps_a_deg = 0.0;
};

// Strict thresholds: success iff eps_e < 2.0 mm and eps_a < 5 degrees.
SuccessReport classify_success(const RegistrationResult& result,
                               const RigidTransform& truth_or_mean, const Vec3& center,
                               double eps_e_threshold_mm = 2.0,
                               double eps_a_threshold_deg = 5.0);

// JSON round-trips for the CLI surfaces.
std::string registration_result_to_json(const RegistrationResult& result);
RegistrationConfig registration_config_from_json(const std::string& text);
std::string registration_config_to_json(const RegistrationConfig& config);

}  // namespace vtrack

#endif  // VTRACK_PIPELINE_HPP
