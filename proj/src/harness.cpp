#include "vtrack/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json_detail.hpp"
#include "vtrack/vvf_io.hpp"

namespace vtrack {

namespace {

using nlohmann::json;

double rms_or_nan(const std::vector<double>& values) {
  return values.empty() ? std::numeric_limits<double>::quiet_NaN() : rms(values);
}

double max_or_nan(const std::vector<double>& values) {
  return values.empty() ? std::numeric_limits<double>::quiet_NaN()
                        : *std::max_element(values.begin(), values.end());
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RegistrationResult register_pair(const BenchmarkInput& input, const BenchmarkPair& pair,
                                 const RegistrationConfig& config,
                                 const PoseCache* cache) {
  if (config.mode == RegistrationMode::ThreeDO2D) {
    const OrthoSlices slices = extract_ortho_slices(
        pair.tracking, pair.tracking.axes, pair.tracking.world_center());
    return register_slices(input.reference, input.bbox_lo, input.bbox_hi, slices, config);
  }
  return register_volumes(input.reference, input.bbox_lo, input.bbox_hi, pair.tracking,
                          config, cache);
}

}  // namespace

ExperimentAggregates aggregate_rows(const std::vector<ExperimentRow>& rows) {
  ExperimentAggregates agg;
  agg.n_pairs = static_cast<int>(rows.size());
  std::vector<double> eps_e, eps_a, calc_rms, calc_max, needle_rms, needle_max;
  double time_sum = 0.0;
  for (const auto& row : rows) {
    time_sum += row.time_ms;
    if (row.success) {
      ++agg.n_success;
      eps_e.push_back(row.eps_e_mm);
      eps_a.push_back(row.eps_a_deg);
      if (!std::isnan(row.calc_rms_mm)) calc_rms.push_back(row.calc_rms_mm);
      if (!std::isnan(row.calc_max_mm)) calc_max.push_back(row.calc_max_mm);
      if (!std::isnan(row.needle_rms_deg)) needle_rms.push_back(row.needle_rms_deg);
      if (!std::isnan(row.needle_max_deg)) needle_max.push_back(row.needle_max_deg);
    }
  }
  agg.success_rate = rows.empty() ? 0.0 : static_cast<double>(agg.n_success) / rows.size();
  agg.eps_e_rms_mm = rms_or_nan(eps_e);
  agg.eps_e_max_mm = max_or_nan(eps_e);
  agg.eps_a_rms_deg = rms_or_nan(eps_a);
  agg.eps_a_max_deg = max_or_nan(eps_a);
  agg.calc_rms_mm = rms_or_nan(calc_rms);
  agg.calc_max_mm = max_or_nan(calc_max);
  agg.needle_rms_deg = rms_or_nan(needle_rms);
  agg.needle_max_deg = max_or_nan(needle_max);
  agg.mean_time_ms = rows.empty() ? 0.0 : time_sum / rows.size();
  return agg;
}

RigidTransform sample_start_perturbation(double noise_mm, double noise_deg,
                                         const Vec3& pivot, Rng& rng) {
  const auto truncated_gaussian = [&rng](double sigma) {
    if (sigma <= 0.0) return 0.0;
    for (;;) {
      const double g = rng.gaussian();
      if (std::abs(g) <= 2.0) return sigma * g;
    }
  };
  Vec3 translation;
  for (int a = 0; a < 3; ++a) translation[a] = truncated_gaussian(noise_mm);

  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
  const double angle = std::abs(truncated_gaussian(noise_deg)) * M_PI / 180.0;

  RigidTransform delta = rotation_about(axis.normalized(), angle, pivot);
  delta.translation += translation;
  return delta;
}

ExperimentReport run_benchmark(const BenchmarkInput& input, int jobs, bool zero_time) {
  input.config.validate();
  const std::string mode_name =
      input.config.mode == RegistrationMode::ThreeDThreeD ? "3d3d" : "3do2d";

  // The reference-side exploration reslices depend only on the reference,
  // box and config: share them across all pairs.
  std::optional<PoseCache> cache;
  if (input.config.mode == RegistrationMode::ThreeDThreeD && !input.pairs.empty()) {
    bool same_geometry = true;
    const Volume& first = input.pairs.front().tracking;
    for (const auto& pair : input.pairs) {
      same_geometry = same_geometry && pair.tracking.dims == first.dims &&
                      (pair.tracking.spacing - first.spacing).norm() == 0.0 &&
                      (pair.tracking.origin - first.origin).norm() == 0.0;
    }
    if (same_geometry) {
      // The cache only pays off when it fits comfortably in memory.
      const VolumeGeometry coarse = pyramid_level_geometry(
          VolumeGeometry::of(first), input.config.pyramid_levels - 1);
      const std::size_t lattice_size = static_cast<std::size_t>(coarse.dims[0]) *
                                       coarse.dims[1] * coarse.dims[2];
      const std::size_t poses = static_cast<std::size_t>(input.config.grid.n_alpha) *
                                input.config.grid.n_beta * input.config.grid.n_lambda;
      if (poses * lattice_size * 8 <= (std::size_t{256} << 20)) {
        cache = precompute_reference_cache(input.reference, input.bbox_lo, input.bbox_hi,
                                           VolumeGeometry::of(first), input.config);
      }
    }
  }

  std::vector<ExperimentRow> rows(input.pairs.size());
  std::atomic<std::size_t> next{0};
  const unsigned workers = jobs > 0
                               ? static_cast<unsigned>(jobs)
                               : std::max(1u, std::thread::hardware_concurrency());

  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= input.pairs.size()) return;
      const BenchmarkPair& pair = input.pairs[i];
      ExperimentRow row;
      row.pair_id = pair.id;
      row.mode = mode_name;
      const auto start = std::chrono::steady_clock::now();
      try {
        const RegistrationResult result =
            register_pair(input, pair, input.config, cache ? &*cache : nullptr);
        const Vec3 gland_center = 0.5 * (input.bbox_lo + input.bbox_hi);
        RigidTransform target;
        if (pair.truth) {
          target = *pair.truth;
        } else {
          const ReproducibilityResult repro =
              run_reproducibility(input, pair, 10, 2.0, 2.0, 0x5eedULL + i);
          target = repro.mean_transform;
        }
        const SuccessReport verdict = classify_success(result, target, gland_center);
        row.success = verdict.success;
        row.eps_e_mm = verdict.eps_e_mm;
        row.eps_a_deg = verdict.eps_a_deg;
        if (pair.scene &&
            (!pair.scene->calc_ref.empty() || !pair.scene->needle_dir_ref.empty())) {
          const LandmarkErrors errors = landmark_errors(*pair.scene, result.transform);
          if (!errors.calc_distances_mm.empty()) {
            row.calc_rms_mm = rms(errors.calc_distances_mm);
            row.calc_max_mm = max_or_nan(errors.calc_distances_mm);
          }
          if (!errors.needle_angles_deg.empty()) {
            row.needle_rms_deg = rms(errors.needle_angles_deg);
            row.needle_max_deg = max_or_nan(errors.needle_angles_deg);
          }
        }
      } catch (const Error& e) {
        row.success = false;
        row.error = e.what();
      }
      row.time_ms = zero_time
                        ? 0.0
                        : std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      rows[i] = std::move(row);
    }
  };

  if (workers <= 1 || input.pairs.size() <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  report.rows = std::move(rows);
  report.aggregates = aggregate_rows(report.rows);
  return report;
}

ReproducibilityResult run_reproducibility(const BenchmarkInput& input,
                                          const BenchmarkPair& pair, int n_restarts,
                                          double noise_mm, double noise_deg,
                                          std::uint64_t seed) {
  if (n_restarts < 2) throw Error("run_reproducibility: need at least 2 restarts");
  const Vec3 pivot = 0.5 * (input.bbox_lo + input.bbox_hi);

  Rng rng(seed);
  std::vector<RigidTransform> estimates;
  ReproducibilityResult out;
  for (int i = 0; i < n_restarts; ++i) {
    RegistrationConfig config = input.config;
    config.stage4_start_perturbation =
        sample_start_perturbation(noise_mm, noise_deg, pivot, rng);
    try {
      const RegistrationResult result = register_pair(input, pair, config, nullptr);
      estimates.push_back(result.transform);
      out.run_ok.push_back(true);
    } catch (const Error&) {
      out.run_ok.push_back(false);
    }
  }
  if (estimates.empty()) {
    throw Error("run_reproducibility: every restart failed");
  }
  out.mean_transform = average_transforms(estimates);
  const Vec3 image_center = input.reference.world_center();
  for (const auto& t : estimates) {
    out.eps_e_mm.push_back(euclidean_error(t, out.mean_transform, image_center));
    out.eps_a_deg.push_back(angular_error(t, out.mean_transform));
  }
  return out;
}

std::string report_to_csv(const ExperimentReport& report) {
  // Emit-time consistency check: the aggregates must equal what the rows say.
  const ExperimentAggregates recomputed = aggregate_rows(report.rows);
  const auto same = [](double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
  };
  if (recomputed.n_success != report.aggregates.n_success ||
      !same(recomputed.eps_e_rms_mm, report.aggregates.eps_e_rms_mm) ||
      !same(recomputed.mean_time_ms, report.aggregates.mean_time_ms)) {
    throw Error("report_to_csv: aggregates do not match rows");
  }

  std::string out =
      "pair_id,mode,success,eps_e_mm,eps_a_deg,calc_rms_mm,calc_max_mm,"
      "needle_rms_deg,needle_max_deg,time_ms\n";
  for (const auto& row : report.rows) {
    out += row.pair_id + "," + row.mode + "," + (row.success ? "1" : "0") + "," +
           format_metric(row.eps_e_mm) + "," + format_metric(row.eps_a_deg) + "," +
           format_metric(row.calc_rms_mm) + "," + format_metric(row.calc_max_mm) + "," +
           format_metric(row.needle_rms_deg) + "," + format_metric(row.needle_max_deg) +
           "," + format_metric(row.time_ms) + "\n";
  }
  return out;
}

std::string report_to_json(const ExperimentReport& report) {
  json j;
  j["rows"] = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["pair_id"] = row.pair_id;
    r["mode"] = row.mode;
    r["success"] = row.success;
    r["eps_e_mm"] = row.eps_e_mm;
    r["eps_a_deg"] = row.eps_a_deg;
    r["calc_rms_mm"] = row.calc_rms_mm;
    r["calc_max_mm"] = row.calc_max_mm;
    r["needle_rms_deg"] = row.needle_rms_deg;
    r["needle_max_deg"] = row.needle_max_deg;
    r["time_ms"] = row.time_ms;
    r["error"] = row.error ? json(*row.error) : json(nullptr);
    j["rows"].push_back(r);
  }
  const ExperimentAggregates& a = report.aggregates;
  j["aggregates"] = {{"n_pairs", a.n_pairs},
                     {"n_success", a.n_success},
                     {"success_rate", a.success_rate},
                     {"eps_e_rms_mm", a.eps_e_rms_mm},
                     {"eps_e_max_mm", a.eps_e_max_mm},
                     {"eps_a_rms_deg", a.eps_a_rms_deg},
                     {"eps_a_max_deg", a.eps_a_max_deg},
                     {"calc_rms_mm", a.calc_rms_mm},
                     {"calc_max_mm", a.calc_max_mm},
                     {"needle_rms_deg", a.needle_rms_deg},
                     {"needle_max_deg", a.needle_max_deg},
                     {"mean_time_ms", a.mean_time_ms}};
  return j.dump(2);
}

BenchmarkInput load_manifest(const std::string& manifest_path,
                             const RegistrationConfig& config) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(manifest_path).parent_path();
  json j;
  try {
    j = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: invalid JSON: ") + e.what());
  }

  BenchmarkInput input;
  input.config = config;
  try {
    const std::string ref_rel = j.at("reference").get<std::string>();
    const fs::path ref_path = base / ref_rel;
    if (!fs::exists(ref_path)) {
      throw ManifestError("manifest: missing reference file '" + ref_path.string() + "'");
    }
    input.reference = read_volume(ref_path.string());

    const auto bbox = j.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 6) throw ManifestError("manifest: bbox expects 6 numbers");
    input.bbox_lo = Vec3(bbox[0], bbox[1], bbox[2]);
    input.bbox_hi = Vec3(bbox[3], bbox[4], bbox[5]);

    for (const auto& p : j.at("pairs")) {
      BenchmarkPair pair;
      pair.id = p.at("id").get<std::string>();
      const fs::path moving = base / p.at("moving").get<std::string>();
      if (!fs::exists(moving)) {
        throw ManifestError("manifest: missing moving file '" + moving.string() + "'");
      }
      pair.tracking = read_volume(moving.string());
      if (p.contains("truth")) {
        const fs::path truth = base / p.at("truth").get<std::string>();
        if (!fs::exists(truth)) {
          throw ManifestError("manifest: missing truth file '" + truth.string() + "'");
        }
        const PhantomScene scene = read_truth_json(truth.string());
        pair.truth = scene.true_pose;
        pair.scene = scene;
      }
      input.pairs.push_back(std::move(pair));
    }
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: ") + e.what());
  }
  return input;
}

void write_truth_json(const std::string& path, const PhantomScene& scene,
                      const ProbePose& pose, std::uint64_t seed) {
  json j;
  j["true_pose"] = detail::transform_to_json(scene.true_pose);
  j["probe_pose"] = {{"alpha_rad", pose.alpha},
                     {"beta_rad", pose.beta},
                     {"lambda_rad", pose.lambda}};
  j["seed"] = seed;
  json landmarks;
  const auto vec_list = [](const std::vector<Vec3>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back(detail::vec3_to_json(v));
    return out;
  };
  landmarks["calcifications_ref"] = vec_list(scene.calc_ref);
  landmarks["calcifications_acq"] = vec_list(scene.calc_acq);
  landmarks["needle_entry_ref"] = vec_list(scene.needle_entry_ref);
  landmarks["needle_entry_acq"] = vec_list(scene.needle_entry_acq);
  landmarks["needle_dir_ref"] = vec_list(scene.needle_dir_ref);
  landmarks["needle_dir_acq"] = vec_list(scene.needle_dir_acq);
  j["landmarks"] = landmarks;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("write_truth_json: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
}

namespace {

json pose_ranges_to_json(const PoseRanges& r) {
  return {{"lambda_max_deg", r.lambda_max * 180.0 / M_PI},
          {"tilt_max_deg", r.tilt_max * 180.0 / M_PI},
          {"slide_max_mm", r.slide_max_mm},
          {"perturb_translation_mm", r.perturb_translation_mm},
          {"perturb_rotation_deg", r.perturb_rotation_deg}};
}

void check_gen_keys(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) throw Error("phantom config: unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace

RegistrationConfig phantom_scale_config(RegistrationMode mode) {
  RegistrationConfig config = RegistrationConfig::defaults(mode);
  config.pyramid_levels = mode == RegistrationMode::ThreeDThreeD ? 4 : 3;
  config.final_level = 1;
  return config;
}

std::string phantom_gen_config_to_json(const PhantomGenConfig& config) {
  const PhantomSpec& s = config.spec;
  json spec;
  spec["gland_semi_axes_mm"] = detail::vec3_to_json(s.gland_semi_axes);
  spec["gland_center_mm"] = detail::vec3_to_json(s.gland_center);
  spec["urethra"] = {{"p0_mm", detail::vec3_to_json(s.urethra_p0)},
                     {"p1_mm", detail::vec3_to_json(s.urethra_p1)},
                     {"radius_mm", s.urethra_radius_mm},
                     {"intensity", s.urethra_intensity}};
  spec["calcifications"] = json::array();
  for (const auto& c : s.calcifications) {
    spec["calcifications"].push_back({{"center_mm", detail::vec3_to_json(c.center)},
                                      {"radius_mm", c.radius_mm},
                                      {"brightness", c.brightness}});
  }
  spec["needle_tracks"] = json::array();
  for (const auto& n : s.needle_tracks) {
    spec["needle_tracks"].push_back({{"entry_mm", detail::vec3_to_json(n.entry)},
                                     {"direction", detail::vec3_to_json(n.direction)},
                                     {"length_mm", n.length_mm}});
  }
  spec["needle_radius_mm"] = s.needle_radius_mm;
  spec["needle_intensity"] = s.needle_intensity;
  spec["interior_intensity"] = s.interior_intensity;
  spec["exterior_intensity"] = s.exterior_intensity;
  spec["speckle_sigma"] = s.speckle_sigma;
  spec["cone"] = {{"half_angle_deg", s.cone_half_angle_deg},
                  {"wide_half_angle_deg", s.cone_wide_half_angle_deg},
                  {"depth_mm", s.cone_depth_mm}};
  spec["shadow_sectors"] = json::array();
  for (const auto& sh : s.shadow_sectors) {
    spec["shadow_sectors"].push_back({{"azimuth_lo_deg", sh.azimuth_lo_deg},
                                      {"azimuth_hi_deg", sh.azimuth_hi_deg},
                                      {"attenuation", sh.attenuation}});
  }
  spec["seed"] = s.seed;

  json j;
  j["spec"] = spec;
  j["probe"] = {{"axis", detail::vec3_to_json(config.probe_axis)},
                {"fp_distance_mm", config.fp_distance_mm},
                {"beam_tilt_deg", config.beam_tilt_deg},
                {"beam_standoff_mm", config.beam_standoff_mm}};
  j["pose_ranges"] = pose_ranges_to_json(config.ranges);
  j["geometry"] = {
      {"dims", {config.geometry.dims[0], config.geometry.dims[1], config.geometry.dims[2]}},
      {"spacing_mm", detail::vec3_to_json(config.geometry.spacing)},
      {"origin_mm", detail::vec3_to_json(config.geometry.origin)}};
  return j.dump(2);
}

PhantomGenConfig phantom_gen_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("phantom config: invalid JSON: ") + e.what());
  }
  check_gen_keys(j, {"spec", "probe", "pose_ranges", "geometry"}, "top level");
  PhantomGenConfig config;

  if (j.contains("spec")) {
    const json& s = j["spec"];
    check_gen_keys(s,
                   {"gland_semi_axes_mm", "gland_center_mm", "urethra", "calcifications",
                    "needle_tracks", "needle_radius_mm", "needle_intensity",
                    "interior_intensity", "exterior_intensity", "speckle_sigma", "cone",
                    "shadow_sectors", "seed"},
                   "spec");
    PhantomSpec& spec = config.spec;
    if (s.contains("gland_semi_axes_mm")) {
      spec.gland_semi_axes = detail::vec3_from_json(s["gland_semi_axes_mm"]);
    }
    if (s.contains("gland_center_mm")) {
      spec.gland_center = detail::vec3_from_json(s["gland_center_mm"]);
    }
    if (s.contains("urethra")) {
      const json& u = s["urethra"];
      check_gen_keys(u, {"p0_mm", "p1_mm", "radius_mm", "intensity"}, "urethra");
      if (u.contains("p0_mm")) spec.urethra_p0 = detail::vec3_from_json(u["p0_mm"]);
      if (u.contains("p1_mm")) spec.urethra_p1 = detail::vec3_from_json(u["p1_mm"]);
      if (u.contains("radius_mm")) spec.urethra_radius_mm = u["radius_mm"].get<double>();
      if (u.contains("intensity")) spec.urethra_intensity = u["intensity"].get<double>();
    }
    if (s.contains("calcifications")) {
      spec.calcifications.clear();
      for (const auto& c : s["calcifications"]) {
        check_gen_keys(c, {"center_mm", "radius_mm", "brightness"}, "calcification");
        Calcification calc;
        calc.center = detail::vec3_from_json(c.at("center_mm"));
        calc.radius_mm = c.at("radius_mm").get<double>();
        calc.brightness = c.at("brightness").get<double>();
        spec.calcifications.push_back(calc);
      }
    }
    if (s.contains("needle_tracks")) {
      spec.needle_tracks.clear();
      for (const auto& n : s["needle_tracks"]) {
        check_gen_keys(n, {"entry_mm", "direction", "length_mm"}, "needle track");
        NeedleTrack needle;
        needle.entry = detail::vec3_from_json(n.at("entry_mm"));
        needle.direction = detail::vec3_from_json(n.at("direction")).normalized();
        needle.length_mm = n.at("length_mm").get<double>();
        spec.needle_tracks.push_back(needle);
      }
    }
    if (s.contains("needle_radius_mm")) spec.needle_radius_mm = s["needle_radius_mm"].get<double>();
    if (s.contains("needle_intensity")) spec.needle_intensity = s["needle_intensity"].get<double>();
    if (s.contains("interior_intensity")) spec.interior_intensity = s["interior_intensity"].get<double>();
    if (s.contains("exterior_intensity")) spec.exterior_intensity = s["exterior_intensity"].get<double>();
    if (s.contains("speckle_sigma")) spec.speckle_sigma = s["speckle_sigma"].get<double>();
    if (s.contains("cone")) {
      const json& c = s["cone"];
      check_gen_keys(c, {"half_angle_deg", "wide_half_angle_deg", "depth_mm"}, "cone");
      if (c.contains("half_angle_deg")) spec.cone_half_angle_deg = c["half_angle_deg"].get<double>();
      if (c.contains("wide_half_angle_deg")) {
        spec.cone_wide_half_angle_deg = c["wide_half_angle_deg"].get<double>();
      }
      if (c.contains("depth_mm")) spec.cone_depth_mm = c["depth_mm"].get<double>();
    }
    if (s.contains("shadow_sectors")) {
      spec.shadow_sectors.clear();
      for (const auto& sh : s["shadow_sectors"]) {
        check_gen_keys(sh, {"azimuth_lo_deg", "azimuth_hi_deg", "attenuation"},
                       "shadow sector");
        ShadowSector sector;
        sector.azimuth_lo_deg = sh.at("azimuth_lo_deg").get<double>();
        sector.azimuth_hi_deg = sh.at("azimuth_hi_deg").get<double>();
        sector.attenuation = sh.at("attenuation").get<double>();
        spec.shadow_sectors.push_back(sector);
      }
    }
    if (s.contains("seed")) spec.seed = s["seed"].get<std::uint64_t>();
  }
  if (j.contains("probe")) {
    const json& p = j["probe"];
    check_gen_keys(p, {"axis", "fp_distance_mm", "beam_tilt_deg", "beam_standoff_mm"},
                   "probe");
    if (p.contains("axis")) config.probe_axis = detail::vec3_from_json(p["axis"]).normalized();
    if (p.contains("fp_distance_mm")) config.fp_distance_mm = p["fp_distance_mm"].get<double>();
    if (p.contains("beam_tilt_deg")) config.beam_tilt_deg = p["beam_tilt_deg"].get<double>();
    if (p.contains("beam_standoff_mm")) {
      config.beam_standoff_mm = p["beam_standoff_mm"].get<double>();
    }
  }
  if (j.contains("pose_ranges")) {
    const json& r = j["pose_ranges"];
    check_gen_keys(r,
                   {"lambda_max_deg", "tilt_max_deg", "slide_max_mm",
                    "perturb_translation_mm", "perturb_rotation_deg"},
                   "pose_ranges");
    if (r.contains("lambda_max_deg")) {
      config.ranges.lambda_max = r["lambda_max_deg"].get<double>() * M_PI / 180.0;
    }
    if (r.contains("tilt_max_deg")) {
      config.ranges.tilt_max = r["tilt_max_deg"].get<double>() * M_PI / 180.0;
    }
    if (r.contains("slide_max_mm")) config.ranges.slide_max_mm = r["slide_max_mm"].get<double>();
    if (r.contains("perturb_translation_mm")) {
      config.ranges.perturb_translation_mm = r["perturb_translation_mm"].get<double>();
    }
    if (r.contains("perturb_rotation_deg")) {
      config.ranges.perturb_rotation_deg = r["perturb_rotation_deg"].get<double>();
    }
  }
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    check_gen_keys(g, {"dims", "spacing_mm", "origin_mm"}, "geometry");
    if (g.contains("dims")) {
      const auto d = g["dims"].get<std::vector<int>>();
      if (d.size() != 3) throw Error("phantom config: geometry.dims expects 3 integers");
      config.geometry.dims = {d[0], d[1], d[2]};
    }
    if (g.contains("spacing_mm")) config.geometry.spacing = detail::vec3_from_json(g["spacing_mm"]);
    if (g.contains("origin_mm")) config.geometry.origin = detail::vec3_from_json(g["origin_mm"]);
  }
  return config;
}

PhantomDataset make_phantom_dataset(const PhantomGenConfig& config, int count,
                                    std::uint64_t seed, bool panorama) {
  PhantomSpec spec = config.spec;
  const ProbeMovementModel model =
      phantom_probe_model(spec, config.probe_axis, config.fp_distance_mm);
  attach_beam_cone(spec, model, config.beam_tilt_deg, config.beam_standoff_mm);

  PhantomDataset dataset;
  dataset.bbox_lo = spec.bbox_lo();
  dataset.bbox_hi = spec.bbox_hi();

  if (panorama) {
    std::vector<Volume> acquisitions;
    std::vector<RigidTransform> poses;
    const double rolls[3] = {-M_PI / 3.0, 0.0, M_PI / 3.0};
    for (int i = 0; i < 3; ++i) {
      PhantomSpec acq_spec = spec;
      acq_spec.seed = hash_u64(seed, 0x2000 + i);
      const RigidTransform pose = pose_to_transform(model, {0.0, 0.0, rolls[i]});
      acquisitions.push_back(render_phantom(acq_spec, pose, config.geometry).volume);
      poses.push_back(pose);
    }
    dataset.reference = compound_panorama(acquisitions, poses);
  } else {
    PhantomSpec ref_spec = spec;
    ref_spec.seed = hash_u64(seed, 0x2000);
    dataset.reference =
        render_phantom(ref_spec, RigidTransform::identity(), config.geometry).volume;
  }

  for (int i = 0; i < count; ++i) {
    PhantomSpec trk_spec = spec;
    trk_spec.seed = hash_u64(seed, 0x1000 + i);
    const PlausiblePose sample =
        sample_plausible_pose(model, config.ranges, hash_u64(seed, i));
    RenderedPhantom rendered = render_phantom(trk_spec, sample.transform, config.geometry);
    BenchmarkPair pair;
    char id[16];
    std::snprintf(id, sizeof(id), "t%03d", i);
    pair.id = id;
    pair.tracking = std::move(rendered.volume);
    pair.truth = rendered.scene.true_pose;
    pair.scene = std::move(rendered.scene);
    dataset.pairs.push_back(std::move(pair));
    dataset.poses.push_back(sample.pose);
  }
  return dataset;
}

std::string generate_phantom_dataset(const PhantomGenConfig& config,
                                     const std::string& out_dir, int count,
                                     std::uint64_t seed, bool panorama) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const PhantomDataset dataset = make_phantom_dataset(config, count, seed, panorama);

  const fs::path base(out_dir);
  write_volume(dataset.reference, (base / "ref.vvf").string());

  json manifest;
  manifest["reference"] = "ref.vvf";
  manifest["bbox"] = {dataset.bbox_lo.x(), dataset.bbox_lo.y(), dataset.bbox_lo.z(),
                      dataset.bbox_hi.x(), dataset.bbox_hi.y(), dataset.bbox_hi.z()};
  manifest["pairs"] = json::array();
  for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
    const BenchmarkPair& pair = dataset.pairs[i];
    const std::string vvf = "track_" + pair.id.substr(1) + ".vvf";
    const std::string truth = "track_" + pair.id.substr(1) + "_truth.json";
    write_volume(pair.tracking, (base / vvf).string());
    write_truth_json((base / truth).string(), *pair.scene, dataset.poses[i],
                     hash_u64(seed, i));
    manifest["pairs"].push_back({{"id", pair.id}, {"moving", vvf}, {"truth", truth}});
  }

  const std::string manifest_path = (base / "set.json").string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error("generate_phantom_dataset: cannot write manifest");
  out << manifest.dump(2) << "\n";

  std::ofstream cfg((base / "gen_config.json").string(), std::ios::trunc);
  cfg << phantom_gen_config_to_json(config) << "\n";
  std::ofstream c3((base / "config_3d3d.json").string(), std::ios::trunc);
  c3 << registration_config_to_json(phantom_scale_config(RegistrationMode::ThreeDThreeD))
     << "\n";
  std::ofstream co((base / "config_3do2d.json").string(), std::ios::trunc);
  co << registration_config_to_json(phantom_scale_config(RegistrationMode::ThreeDO2D))
     << "\n";
  return manifest_path;
}

PhantomScene read_truth_json(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ManifestError(std::string("truth: invalid JSON: ") + e.what());
  }
  PhantomScene scene;
  try {
    scene.true_pose = detail::transform_from_json(j.at("true_pose"));
    const auto vec_list = [](const json& arr) {
      std::vector<Vec3> out;
      for (const auto& v : arr) out.push_back(detail::vec3_from_json(v));
      return out;
    };
    const json& landmarks = j.at("landmarks");
    scene.calc_ref = vec_list(landmarks.at("calcifications_ref"));
    scene.calc_acq = vec_list(landmarks.at("calcifications_acq"));
    scene.needle_entry_ref = vec_list(landmarks.at("needle_entry_ref"));
    scene.needle_entry_acq = vec_list(landmarks.at("needle_entry_acq"));
    scene.needle_dir_ref = vec_list(landmarks.at("needle_dir_ref"));
    scene.needle_dir_acq = vec_list(landmarks.at("needle_dir_acq"));
  } catch (const json::exception& e) {
    throw ManifestError(std::string("truth: ") + e.what());
  }
  return scene;
}

}  // namespace vtrack
