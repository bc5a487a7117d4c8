#ifndef VTRACK_HARNESS_HPP
#define VTRACK_HARNESS_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vtrack/phantom.hpp"
#include "vtrack/pipeline.hpp"
#include "vtrack/rng.hpp"

namespace vtrack {

// One benchmark pairing: the tracking acquisition plus, when the data is
// synthetic, its exact truth and landmark scene.
struct BenchmarkPair {
  std::string id;
  Volume tracking;
  std::optional<RigidTransform> truth;  // reference-to-acquisition
  std::optional<PhantomScene> scene;
};

struct BenchmarkInput {
  Volume reference;
  Vec3 bbox_lo = Vec3::Zero();
  Vec3 bbox_hi = Vec3::Zero();
  RegistrationConfig config;
  std::vector<BenchmarkPair> pairs;
};

struct ExperimentRow {
  std::string pair_id;
  std::string mode;
  bool success = false;
  double eps_e_mm = 0.0;
  double eps_a_deg = 0.0;
  double calc_rms_mm = std::numeric_limits<double>::quiet_NaN();
  double calc_max_mm = std::numeric_limits<double>::quiet_NaN();
  double needle_rms_deg = std::numeric_limits<double>::quiet_NaN();
  double needle_max_deg = std::numeric_limits<double>::quiet_NaN();
  double time_ms = 0.0;
  std::optional<std::string> error;
};

struct ExperimentAggregates {
  int n_pairs = 0;
  int n_success = 0;
  double success_rate = 0.0;
  // Precision rows cover successful pairs only, like the paper's tables.
  double eps_e_rms_mm = std::numeric_limits<double>::quiet_NaN();
  double eps_e_max_mm = std::numeric_limits<double>::quiet_NaN();
  double eps_a_rms_deg = std::numeric_limits<double>::quiet_NaN();
  double eps_a_max_deg = std::numeric_limits<double>::quiet_NaN();
  double calc_rms_mm = std::numeric_limits<double>::quiet_NaN();
  double calc_max_mm = std::numeric_limits<double>::quiet_NaN();
  double needle_rms_deg = std::numeric_limits<double>::quiet_NaN();
  double needle_max_deg = std::numeric_limits<double>::quiet_NaN();
  double mean_time_ms = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  ExperimentAggregates aggregates;
};

// Recomputes the aggregates from the rows; emit paths cross-check against
// this so a report can never drift from its own rows.
ExperimentAggregates aggregate_rows(const std::vector<ExperimentRow>& rows);

// Registers every pair (threaded across pairs), classifying success against
// the pair's truth when present and against the restart mean otherwise.
// zero_time blanks wall-clock fields so reports compare bit-for-bit.
ExperimentReport run_benchmark(const BenchmarkInput& input, int jobs = 0,
                               bool zero_time = false);

// Fixed CSV surface:
// pair_id,mode,success,eps_e_mm,eps_a_deg,calc_rms_mm,calc_max_mm,
// needle_rms_deg,needle_max_deg,time_ms
std::string report_to_csv(const ExperimentReport& report);
std::string report_to_json(const ExperimentReport& report);

// The paper's reproducibility protocol: n restarts of one pair from starts
// perturbed by truncated Gaussian noise (sigma = noise, cut at 2 sigma),
// errors measured against the average transform at the reference image
// center. Failed runs are recorded, not fatal.
struct ReproducibilityResult {
  RigidTransform mean_transform;
  std::vector<double> eps_e_mm;
  std::vector<double> eps_a_deg;
  std::vector<bool> run_ok;
};
ReproducibilityResult run_reproducibility(const BenchmarkInput& input,
                                          const BenchmarkPair& pair, int n_restarts,
                                          double noise_mm, double noise_deg,
                                          std::uint64_t seed);

// Truncated-Gaussian start perturbation used by the protocol above:
// isotropic translation noise plus a random-axis rotation, pivoted at the
// gland center.
RigidTransform sample_start_perturbation(double noise_mm, double noise_deg,
                                         const Vec3& pivot, Rng& rng);

// Manifest loading for the CLI (paths resolved against the manifest's
// directory). Throws ManifestError on missing or malformed entries.
BenchmarkInput load_manifest(const std::string& manifest_path,
                             const RegistrationConfig& config);

// Phantom truth sidecar files.
void write_truth_json(const std::string& path, const PhantomScene& scene,
                      const ProbePose& pose, std::uint64_t seed);
PhantomScene read_truth_json(const std::string& path);

// Registration settings tuned for the 128^3 / 0.4 mm phantom datasets this
// harness generates: exploration runs at 3.2 mm (3D-3D) or on 32^2 planes
// (o2D) and the final search descends to 0.8 mm, trading some of the
// paper's speed margin for the synthetic images' weaker texture.
RegistrationConfig phantom_scale_config(RegistrationMode mode);

// Everything `phantom gen` needs: the scene spec, probe/beam geometry, the
// plausible-pose ranges and the acquisition grid.
struct PhantomGenConfig {
  PhantomSpec spec = PhantomSpec::default_spec();
  Vec3 probe_axis = ProbeConfig::default_probe_axis();
  double fp_distance_mm = 45.0;
  double beam_tilt_deg = 0.0;
  // The fan apex sits this far behind the probe contact point, like a
  // transducer imaging through the probe housing and rectal wall; it is
  // what lets the beam see the tissue right at the contact surface.
  double beam_standoff_mm = 12.0;
  PoseRanges ranges;
  PhantomGeometry geometry;
};
PhantomGenConfig phantom_gen_config_from_json(const std::string& text);
std::string phantom_gen_config_to_json(const PhantomGenConfig& config);

// In-memory phantom dataset: reference (panorama of three cone acquisitions
// rolled -60/0/+60 degrees, or the single centered acquisition), the gland
// box, and `count` tracking acquisitions at plausible poses with truth.
struct PhantomDataset {
  Volume reference;
  Vec3 bbox_lo = Vec3::Zero();
  Vec3 bbox_hi = Vec3::Zero();
  std::vector<BenchmarkPair> pairs;
  std::vector<ProbePose> poses;  // generating poses, parallel to pairs
};
PhantomDataset make_phantom_dataset(const PhantomGenConfig& config, int count,
                                    std::uint64_t seed, bool panorama);

// Writes ref.vvf, track_###.vvf, track_###_truth.json and set.json under
// out_dir; returns the manifest path.
std::string generate_phantom_dataset(const PhantomGenConfig& config,
                                     const std::string& out_dir, int count,
                                     std::uint64_t seed, bool panorama);

}  // namespace vtrack

#endif  // VTRACK_HARNESS_HPP
