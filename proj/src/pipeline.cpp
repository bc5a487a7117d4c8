#include "vtrack/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "json_detail.hpp"

namespace vtrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Shared energy core: correlations between tracking-lattice values and
// reference samples at pose-transformed points, restricted to the points
// landing inside the prostate box.
bool inside_box(const Vec3& x, const Vec3& lo, const Vec3& hi) {
  return !((x.array() < lo.array()).any() || (x.array() > hi.array()).any());
}

struct EnergyContext {
  const Volume* ref = nullptr;
  const Volume* ref_grad = nullptr;
  const TrackingDomain* domain = nullptr;
  Vec3 bbox_lo = Vec3::Zero();
  Vec3 bbox_hi = Vec3::Zero();
  bool use_attribute = false;
  double min_overlap = 0.25;
};

double energy_from_stats(const EnergyContext& ctx, OverlapStats& stats_int,
                         OverlapStats& stats_grad) {
  stats_int.overlap_fraction =
      ctx.domain->capacity_int > 0
          ? static_cast<double>(stats_int.n) / ctx.domain->capacity_int
          : 0.0;
  const auto cc_int = stats_int.correlation(ctx.min_overlap);
  if (!cc_int) return kInf;
  if (!ctx.use_attribute) return 1.0 - *cc_int;
  stats_grad.overlap_fraction =
      ctx.domain->capacity_grad > 0
          ? static_cast<double>(stats_grad.n) / ctx.domain->capacity_grad
          : 0.0;
  const auto cc_grad = stats_grad.correlation(ctx.min_overlap);
  if (!cc_grad) return kInf;
  return (1.0 - *cc_int) * (1.0 - *cc_grad);
}

double evaluate_energy(const EnergyContext& ctx, const RigidTransform& m) {
  OverlapStats stats_int, stats_grad;
  const TrackingDomain& domain = *ctx.domain;
  for (std::size_t j = 0; j < domain.points.size(); ++j) {
    const Vec3 x = m.apply(domain.points[j]);
    if (!inside_box(x, ctx.bbox_lo, ctx.bbox_hi)) continue;
    if (!std::isnan(domain.values[j])) {
      if (const auto y = sample_trilinear(*ctx.ref, x)) {
        stats_int.accumulate(domain.values[j], *y);
      }
    }
    if (ctx.use_attribute && !std::isnan(domain.grad_values[j])) {
      if (const auto y = sample_trilinear(*ctx.ref_grad, x)) {
        stats_grad.accumulate(domain.grad_values[j], *y);
      }
    }
  }
  return energy_from_stats(ctx, stats_int, stats_grad);
}

double evaluate_energy_cached(const EnergyContext& ctx, const PoseCache& cache,
                              std::size_t pose) {
  OverlapStats stats_int, stats_grad;
  const TrackingDomain& domain = *ctx.domain;
  const float* row_int = cache.intensity_row(pose);
  const float* row_grad = cache.gradient_row(pose);
  for (std::size_t j = 0; j < domain.points.size(); ++j) {
    if (!std::isnan(domain.values[j]) && !std::isnan(row_int[j])) {
      stats_int.accumulate(domain.values[j], row_int[j]);
    }
    if (ctx.use_attribute && !std::isnan(domain.grad_values[j]) &&
        !std::isnan(row_grad[j])) {
      stats_grad.accumulate(domain.grad_values[j], row_grad[j]);
    }
  }
  return energy_from_stats(ctx, stats_int, stats_grad);
}

// Local 6-DOF perturbation: axis-angle rotation about the gland-center
// pivot plus a translation, in scaled optimizer units.
RigidTransform delta_transform(const Eigen::VectorXd& x_scaled,
                               const Eigen::Matrix<double, 6, 1>& scale,
                               const Vec3& pivot) {
  const RigidParams params = RigidParams::from_scaled(x_scaled, scale);
  const RigidTransform raw = params_to_transform(params);
  RigidTransform out;
  out.rotation = raw.rotation;
  out.translation = pivot - raw.rotation * pivot + raw.translation;
  return out;
}

struct RefineOutcome {
  RigidTransform m;
  double energy = kInf;
  bool converged = false;
};

RefineOutcome refine_local(const EnergyContext& ctx, const RigidTransform& m0,
                           const Vec3& pivot, const OptimizerConfig& opt_config) {
  const auto scale = RigidParams::default_scale();
  const auto objective = [&](const Eigen::VectorXd& x) {
    return evaluate_energy(ctx, compose(m0, delta_transform(x, scale, pivot)));
  };
  const PowellResult res =
      powell_minimize(objective, Eigen::VectorXd::Zero(6), opt_config);
  return {compose(m0, delta_transform(res.x, scale, pivot)), res.f, res.converged};
}

}  // namespace

RegistrationConfig RegistrationConfig::defaults(RegistrationMode mode) {
  RegistrationConfig config;
  config.mode = mode;
  if (mode == RegistrationMode::ThreeDO2D) {
    config.pyramid_levels = 4;
    config.final_level = 1;  // second-finest of four
  }
  return config;
}

void RegistrationConfig::validate() const {
  if (pyramid_levels < 2) throw Error("config: pyramid_levels must be >= 2");
  if (final_level < 1 || final_level >= pyramid_levels) {
    throw Error("config: final_level must satisfy 1 <= final_level < pyramid_levels");
  }
  if (candidate_count < 1) throw Error("config: candidate_count must be >= 1");
  if (!(min_overlap > 0.0) || min_overlap > 1.0) {
    throw Error("config: min_overlap must lie in (0, 1]");
  }
  if (grid.n_alpha < 1 || grid.n_beta < 1 || grid.n_lambda < 1) {
    throw Error("config: grid step counts must be >= 1");
  }
  if (optimizer.param_tolerance <= 0.0 || optimizer.value_tolerance <= 0.0 ||
      optimizer.bracket_step <= 0.0 || optimizer.max_iterations < 1) {
    throw Error("config: optimizer parameters must be positive");
  }
}

Volume compound_panorama(const std::vector<Volume>& acquisitions,
                         const std::vector<RigidTransform>& poses) {
  if (acquisitions.empty() || acquisitions.size() != poses.size()) {
    throw Error("compound_panorama: need one pose per acquisition");
  }
  if (acquisitions.size() > 8) {
    throw Error("compound_panorama: at most 8 acquisitions supported");
  }

  double spacing = kInf;
  Vec3 lo = Vec3::Constant(kInf), hi = Vec3::Constant(-kInf);
  for (std::size_t i = 0; i < acquisitions.size(); ++i) {
    const Volume& acq = acquisitions[i];
    spacing = std::min(spacing, acq.spacing.minCoeff());
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 index((corner & 1) ? acq.dims[0] - 1 : 0,
                       (corner & 2) ? acq.dims[1] - 1 : 0,
                       (corner & 4) ? acq.dims[2] - 1 : 0);
      const Vec3 w = poses[i].apply(acq.world_from_index(index.x(), index.y(), index.z()));
      lo = lo.cwiseMin(w);
      hi = hi.cwiseMax(w);
    }
  }

  Volume out;
  out.spacing = Vec3::Constant(spacing);
  out.origin = lo;
  for (int a = 0; a < 3; ++a) {
    out.dims[a] = static_cast<int>(std::floor((hi[a] - lo[a]) / spacing)) + 1;
  }
  out.data.assign(out.voxel_count(), 0.0f);
  out.mask.assign(out.voxel_count(), 0);

  std::vector<RigidTransform> inverse_poses;
  inverse_poses.reserve(poses.size());
  for (const auto& pose : poses) inverse_poses.push_back(invert(pose));

  std::vector<std::uint8_t> contributors(out.voxel_count(), 0);
  const std::size_t slab = static_cast<std::size_t>(out.dims[0]) * out.dims[1];
  detail::parallel_for(static_cast<std::size_t>(out.dims[2]), [&](std::size_t k) {
    std::size_t idx = k * slab;
    for (int j = 0; j < out.dims[1]; ++j) {
      for (int i = 0; i < out.dims[0]; ++i, ++idx) {
        const Vec3 p = out.world_from_index(i, j, static_cast<double>(k));
        double sum = 0.0;
        int count = 0;
        std::uint8_t bits = 0;
        for (std::size_t a = 0; a < acquisitions.size(); ++a) {
          if (const auto s = sample_trilinear(acquisitions[a], inverse_poses[a].apply(p))) {
            sum += *s;
            ++count;
            bits |= static_cast<std::uint8_t>(1u << a);
          }
        }
        if (count > 0) {
          out.data[idx] = static_cast<float>(sum / count);
          out.mask[idx] = 1;
          contributors[idx] = bits;
        }
      }
    }
  });

  // Pairwise-overlap connectivity: a bridging acquisition keeps disjoint
  // pairs legal.
  const std::size_t n = acquisitions.size();
  if (n >= 2) {
    std::vector<std::vector<long long>> overlap(n, std::vector<long long>(n, 0));
    for (std::uint8_t bits : contributors) {
      if (bits == 0) continue;
      for (std::size_t a = 0; a < n; ++a) {
        if (!(bits & (1u << a))) continue;
        for (std::size_t b = a + 1; b < n; ++b) {
          if (bits & (1u << b)) ++overlap[a][b];
        }
      }
    }
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    const std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (overlap[a][b] > 0) parent[find(a)] = find(b);
      }
    }
    for (std::size_t a = 1; a < n; ++a) {
      if (find(a) != find(0)) {
        throw NoOverlap("compound_panorama: acquisitions do not overlap pairwise");
      }
    }
  }
  return out;
}

std::vector<int> select_candidates(const std::vector<double>& energies,
                                   const std::vector<RigidTransform>& transforms,
                                   const Vec3& center, double min_distance_mm,
                                   double min_distance_deg, int count) {
  if (energies.size() != transforms.size()) {
    throw Error("select_candidates: energies/transforms size mismatch");
  }
  std::vector<int> order(energies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return energies[a] < energies[b]; });

  std::vector<int> selected;
  for (int idx : order) {
    if (std::isinf(energies[idx])) break;
    if (static_cast<int>(selected.size()) >= count) break;
    bool too_close = false;
    for (int kept : selected) {
      const double displacement =
          (transforms[idx].apply(center) - transforms[kept].apply(center)).norm();
      const double angle_deg =
          rotation_angle_between(transforms[idx].rotation, transforms[kept].rotation) *
          180.0 / M_PI;
      if (displacement < min_distance_mm && angle_deg < min_distance_deg) {
        too_close = true;
        break;
      }
    }
    if (!too_close) selected.push_back(idx);
  }
  return selected;
}

VolumeGeometry pyramid_level_geometry(VolumeGeometry geometry, int level) {
  for (int l = 0; l < level; ++l) {
    for (int a = 0; a < 3; ++a) {
      if (geometry.dims[a] == 1) continue;
      geometry.dims[a] /= 2;
      geometry.spacing[a] *= 2.0;
    }
  }
  return geometry;
}

std::vector<Vec3> cache_lattice(const VolumeGeometry& level_geometry) {
  Volume shell;
  shell.dims = level_geometry.dims;
  shell.spacing = level_geometry.spacing;
  shell.origin = level_geometry.origin;
  shell.axes = level_geometry.axes;
  std::vector<Vec3> lattice;
  lattice.reserve(shell.voxel_count());
  for (int k = 0; k < shell.dims[2]; ++k) {
    for (int j = 0; j < shell.dims[1]; ++j) {
      for (int i = 0; i < shell.dims[0]; ++i) {
        lattice.push_back(shell.world_from_index(i, j, k));
      }
    }
  }
  return lattice;
}

TrackingDomain make_tracking_domain(const Volume& level, const Volume& grad_level,
                                    const Vec3& bbox_lo, const Vec3& bbox_hi) {
  TrackingDomain domain;
  const std::size_t n = level.voxel_count();
  domain.points.reserve(n);
  domain.values.reserve(n);
  domain.grad_values.reserve(n);
  constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
  for (int k = 0; k < level.dims[2]; ++k) {
    for (int j = 0; j < level.dims[1]; ++j) {
      for (int i = 0; i < level.dims[0]; ++i) {
        const std::size_t idx = level.index(i, j, k);
        const Vec3 p = level.world_from_index(i, j, k);
        domain.points.push_back(p);
        const bool value_ok = level.valid_at(idx);
        const bool grad_ok = grad_level.valid_at(idx);
        domain.values.push_back(value_ok ? level.data[idx] : kNaN);
        domain.grad_values.push_back(grad_ok ? grad_level.data[idx] : kNaN);
        if (inside_box(p, bbox_lo, bbox_hi)) {
          if (value_ok) ++domain.capacity_int;
          if (grad_ok) ++domain.capacity_grad;
        }
      }
    }
  }
  return domain;
}

TrackingDomain make_plane_domain(const std::vector<Volume>& plane_levels,
                                 const Vec3& bbox_lo, const Vec3& bbox_hi) {
  TrackingDomain domain;
  constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();
  for (const Volume& plane : plane_levels) {
    const Volume grad = gradient_magnitude(plane);
    for (int j = 0; j < plane.dims[1]; ++j) {
      for (int i = 0; i < plane.dims[0]; ++i) {
        const std::size_t idx = plane.index(i, j, 0);
        const Vec3 p = plane.world_from_index(i, j, 0);
        domain.points.push_back(p);
        const bool value_ok = plane.valid_at(idx);
        const bool grad_ok = grad.valid_at(idx);
        domain.values.push_back(value_ok ? plane.data[idx] : kNaN);
        domain.grad_values.push_back(grad_ok ? grad.data[idx] : kNaN);
        if (inside_box(p, bbox_lo, bbox_hi)) {
          if (value_ok) ++domain.capacity_int;
          if (grad_ok) ++domain.capacity_grad;
        }
      }
    }
  }
  return domain;
}

double level_energy(const Volume& reference_level, const Volume& reference_grad_level,
                    const TrackingDomain& domain, const Vec3& bbox_lo,
                    const Vec3& bbox_hi, const RigidTransform& ref_from_acq,
                    bool use_attribute, double min_overlap) {
  EnergyContext ctx;
  ctx.ref = &reference_level;
  ctx.ref_grad = &reference_grad_level;
  ctx.domain = &domain;
  ctx.bbox_lo = bbox_lo;
  ctx.bbox_hi = bbox_hi;
  ctx.use_attribute = use_attribute;
  ctx.min_overlap = min_overlap;
  return evaluate_energy(ctx, ref_from_acq);
}

std::vector<ExplorationCandidate> systematic_exploration(
    const Volume& reference_level, const Volume& reference_grad_level,
    const TrackingDomain& domain, const Vec3& bbox_lo, const Vec3& bbox_hi,
    const ExplorationGrid& grid, const RegistrationConfig& config) {
  EnergyContext ctx;
  ctx.ref = &reference_level;
  ctx.ref_grad = &reference_grad_level;
  ctx.domain = &domain;
  ctx.bbox_lo = bbox_lo;
  ctx.bbox_hi = bbox_hi;
  ctx.use_attribute = config.pyramid_levels - 1 >= config.attribute_level_cutoff;
  ctx.min_overlap = config.min_overlap;

  const std::size_t n = grid.poses.size();
  std::vector<double> energies(n, kInf);
  const PoseCache* cache = grid.cache.get();
  if (cache) {
    if (cache->n_poses != n || cache->n_points_int != domain.points.size() ||
        cache->n_points_grad != domain.points.size()) {
      throw Error("systematic_exploration: cache does not match this domain");
    }
    detail::parallel_for(n, [&](std::size_t p) {
      energies[p] = evaluate_energy_cached(ctx, *cache, p);
    });
  } else {
    detail::parallel_for(n, [&](std::size_t p) {
      energies[p] = evaluate_energy(ctx, grid.transforms[p]);
    });
  }

  bool any_defined = false;
  for (double e : energies) any_defined = any_defined || !std::isinf(e);
  if (!any_defined) {
    throw AllUndefined("systematic_exploration: every grid pose is undefined");
  }

  const Vec3 center = 0.5 * (bbox_lo + bbox_hi);
  const std::vector<int> picked =
      select_candidates(energies, grid.transforms, center,
                        config.candidate_min_distance_mm,
                        config.candidate_min_distance_deg, config.candidate_count);

  std::vector<ExplorationCandidate> out;
  out.reserve(picked.size());
  for (int idx : picked) {
    ExplorationCandidate c;
    c.pose_index = idx;
    c.pose = grid.poses[idx];
    c.sampling_transform = grid.transforms[idx];
    c.energy = energies[idx];
    out.push_back(c);
  }
  return out;
}

namespace {

struct StageRecorder {
  std::vector<StageTiming>& timings;
  Clock::time_point t0 = Clock::now();
  void record(const std::string& stage) {
    timings.push_back({stage, ms_since(t0)});
    t0 = Clock::now();
  }
};

// Shared staged search; build_domain returns the tracking-side fixed data
// for one pyramid level.
RegistrationResult run_stages(
    const Volume& reference, const Vec3& bbox_lo, const Vec3& bbox_hi,
    const RegistrationConfig& config, const PoseCache* cache,
    const std::function<TrackingDomain(int level)>& build_domain) {
  config.validate();
  RegistrationResult result;
  StageRecorder recorder{result.stage_timings};
  const auto total_start = Clock::now();

  const int levels = config.pyramid_levels;
  const int coarsest = levels - 1;
  const Vec3 pivot = 0.5 * (bbox_lo + bbox_hi);

  const std::vector<Volume> ref_pyramid = build_pyramid(reference, levels);
  std::vector<Volume> ref_grads(levels);
  for (int l = config.final_level; l <= coarsest; ++l) {
    if (l >= config.attribute_level_cutoff || l == coarsest) {
      ref_grads[l] = gradient_magnitude(ref_pyramid[l]);
    }
  }
  recorder.record("pyramids");

  const ProbeMovementModel model =
      consistent_model(bbox_lo, bbox_hi, config.probe.axis, config.probe.fp_distance_mm);
  ExplorationGrid grid =
      generate_grid(model, config.grid.n_alpha, config.grid.n_beta, config.grid.n_lambda,
                    config.grid.tilt_limit_deg * M_PI / 180.0);

  const TrackingDomain coarse_domain = build_domain(coarsest);
  if (coarse_domain.capacity_int == 0) {
    throw AllUndefined("register: tracking image contributes no points inside the box");
  }
  if (cache) {
    if (cache->n_poses != grid.poses.size() ||
        cache->n_points_int != coarse_domain.points.size() ||
        cache->n_points_grad != coarse_domain.points.size()) {
      throw Error("register: precomputed cache does not match this reference/config");
    }
    grid.cache = std::shared_ptr<const PoseCache>(cache, [](const PoseCache*) {});
  }

  const Volume& coarse_grad =
      ref_grads[coarsest].data.empty() ? ref_pyramid[coarsest] : ref_grads[coarsest];
  std::vector<ExplorationCandidate> explored = systematic_exploration(
      ref_pyramid[coarsest], coarse_grad, coarse_domain, bbox_lo, bbox_hi, grid, config);
  recorder.record("exploration");

  // Powell refinement of every pruned candidate, still on the coarsest level.
  EnergyContext coarse_ctx;
  coarse_ctx.ref = &ref_pyramid[coarsest];
  coarse_ctx.ref_grad = &coarse_grad;
  coarse_ctx.domain = &coarse_domain;
  coarse_ctx.bbox_lo = bbox_lo;
  coarse_ctx.bbox_hi = bbox_hi;
  coarse_ctx.use_attribute = coarsest >= config.attribute_level_cutoff;
  coarse_ctx.min_overlap = config.min_overlap;

  std::vector<RefineOutcome> refined(explored.size());
  detail::parallel_for(explored.size(), [&](std::size_t i) {
    refined[i] = refine_local(coarse_ctx, explored[i].sampling_transform, pivot,
                              config.optimizer);
  });

  std::vector<std::size_t> candidate_order(explored.size());
  std::iota(candidate_order.begin(), candidate_order.end(), 0);
  std::stable_sort(candidate_order.begin(), candidate_order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return refined[a].energy < refined[b].energy;
                   });
  for (std::size_t i : candidate_order) {
    CandidateRecord record;
    record.pose = explored[i].pose;
    record.exploration_energy = explored[i].energy;
    record.refined = invert(refined[i].m);
    record.refined_energy = refined[i].energy;
    result.candidates.push_back(record);
  }
  const std::size_t best = candidate_order.front();
  bool all_converged = refined[best].converged;
  recorder.record("candidate_refinement");

  // Multi-level search from the coarsest level down to final_level.
  RigidTransform m = refined[best].m;
  if (config.stage4_start_perturbation) {
    m = compose(m, *config.stage4_start_perturbation);
  }
  for (int level = coarsest; level >= config.final_level; --level) {
    const TrackingDomain domain = level == coarsest ? coarse_domain : build_domain(level);

    EnergyContext ctx;
    ctx.ref = &ref_pyramid[level];
    ctx.ref_grad = ref_grads[level].data.empty() ? &ref_pyramid[level] : &ref_grads[level];
    ctx.domain = &domain;
    ctx.bbox_lo = bbox_lo;
    ctx.bbox_hi = bbox_hi;
    ctx.use_attribute = level >= config.attribute_level_cutoff;
    ctx.min_overlap = config.min_overlap;

    LevelTrace trace;
    trace.level = level;
    trace.start_energy = evaluate_energy(ctx, m);
    const RefineOutcome outcome = refine_local(ctx, m, pivot, config.optimizer);
    m = outcome.m;
    trace.end_energy = outcome.energy;
    trace.converged = outcome.converged;
    all_converged = all_converged && outcome.converged;
    result.level_trace.push_back(trace);
  }
  recorder.record("multilevel");

  result.transform = invert(m);
  result.final_energy = result.level_trace.back().end_energy;
  result.converged = all_converged;
  if (!all_converged) result.failure_reason = "non_converged";
  result.stage_timings.push_back({"total", ms_since(total_start)});
  return result;
}

}  // namespace

RegistrationResult register_volumes(const Volume& reference, const Vec3& bbox_lo,
                                    const Vec3& bbox_hi, const Volume& tracking,
                                    const RegistrationConfig& config,
                                    const PoseCache* cache) {
  if (config.mode != RegistrationMode::ThreeDThreeD) {
    throw Error("register_volumes: config mode is not 3d3d");
  }
  const std::vector<Volume> trk_pyramid = build_pyramid(tracking, config.pyramid_levels);
  const auto build_domain = [&](int level) {
    return make_tracking_domain(trk_pyramid[level],
                                gradient_magnitude(trk_pyramid[level]), bbox_lo, bbox_hi);
  };
  return run_stages(reference, bbox_lo, bbox_hi, config, cache, build_domain);
}

RegistrationResult register_slices(const Volume& reference, const Vec3& bbox_lo,
                                   const Vec3& bbox_hi, const OrthoSlices& tracking,
                                   const RegistrationConfig& config) {
  if (config.mode != RegistrationMode::ThreeDO2D) {
    throw Error("register_slices: config mode is not 3do2d");
  }
  tracking.validate();
  std::vector<std::vector<Volume>> plane_pyramids;
  plane_pyramids.reserve(tracking.planes.size());
  for (const Volume& plane : tracking.planes) {
    plane_pyramids.push_back(build_pyramid(plane, config.pyramid_levels));
  }
  const auto build_domain = [&](int level) {
    std::vector<Volume> level_planes;
    level_planes.reserve(plane_pyramids.size());
    for (const auto& pyramid : plane_pyramids) level_planes.push_back(pyramid[level]);
    return make_plane_domain(level_planes, bbox_lo, bbox_hi);
  };
  return run_stages(reference, bbox_lo, bbox_hi, config, nullptr, build_domain);
}

PoseCache precompute_reference_cache(const Volume& reference, const Vec3& bbox_lo,
                                     const Vec3& bbox_hi,
                                     const VolumeGeometry& acquisition_geometry,
                                     const RegistrationConfig& config) {
  config.validate();
  const std::vector<Volume> ref_pyramid = build_pyramid(reference, config.pyramid_levels);
  const Volume& coarse = ref_pyramid.back();
  const Volume coarse_grad = gradient_magnitude(coarse);

  const ProbeMovementModel model =
      consistent_model(bbox_lo, bbox_hi, config.probe.axis, config.probe.fp_distance_mm);
  ExplorationGrid grid =
      generate_grid(model, config.grid.n_alpha, config.grid.n_beta, config.grid.n_lambda,
                    config.grid.tilt_limit_deg * M_PI / 180.0);

  const std::vector<Vec3> lattice = cache_lattice(
      pyramid_level_geometry(acquisition_geometry, config.pyramid_levels - 1));
  grid = precompute_cache(std::move(grid), coarse, coarse_grad, lattice, bbox_lo, bbox_hi);
  return *grid.cache;
}

SuccessReport classify_success(const RegistrationResult& result,
                               const RigidTransform& truth_or_mean, const Vec3& center,
                               double eps_e_threshold_mm, double eps_a_threshold_deg) {
  SuccessReport report;
  report.eps_e_mm = euclidean_error(result.transform, truth_or_mean, center);
  report.eps_a_deg = angular_error(result.transform, truth_or_mean);
  report.success =
      report.eps_e_mm < eps_e_threshold_mm && report.eps_a_deg < eps_a_threshold_deg;
  return report;
}

// ---------------------------------------------------------------------------
// JSON surfaces

namespace {

using nlohmann::json;
using detail::transform_to_json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) throw Error("config: unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace

std::string registration_result_to_json(const RegistrationResult& result) {
  json j;
  j["transform"] = transform_to_json(result.transform);
  j["final_energy"] = result.final_energy;
  j["converged"] = result.converged;
  j["failure_reason"] =
      result.failure_reason ? json(*result.failure_reason) : json(nullptr);
  j["candidates"] = json::array();
  for (const auto& c : result.candidates) {
    json jc;
    jc["pose"] = {{"alpha_rad", c.pose.alpha},
                  {"beta_rad", c.pose.beta},
                  {"lambda_rad", c.pose.lambda}};
    jc["exploration_energy"] = c.exploration_energy;
    jc["refined_transform"] = transform_to_json(c.refined);
    jc["refined_energy"] = c.refined_energy;
    j["candidates"].push_back(jc);
  }
  j["level_trace"] = json::array();
  for (const auto& t : result.level_trace) {
    j["level_trace"].push_back({{"level", t.level},
                                {"start_energy", t.start_energy},
                                {"end_energy", t.end_energy},
                                {"converged", t.converged}});
  }
  j["stage_timings_ms"] = json::object();
  for (const auto& s : result.stage_timings) j["stage_timings_ms"][s.stage] = s.ms;
  return j.dump(2);
}

std::string registration_config_to_json(const RegistrationConfig& config) {
  json j;
  j["mode"] = config.mode == RegistrationMode::ThreeDThreeD ? "3d3d" : "3do2d";
  j["pyramid_levels"] = config.pyramid_levels;
  j["final_level"] = config.final_level;
  j["grid"] = {{"n_alpha", config.grid.n_alpha},
               {"n_beta", config.grid.n_beta},
               {"n_lambda", config.grid.n_lambda},
               {"tilt_limit_deg", config.grid.tilt_limit_deg}};
  j["candidate_count"] = config.candidate_count;
  j["candidate_min_distance"] = {{"mm", config.candidate_min_distance_mm},
                                 {"deg", config.candidate_min_distance_deg}};
  j["attribute_level_cutoff"] = config.attribute_level_cutoff;
  j["min_overlap"] = config.min_overlap;
  j["optimizer"] = {{"param_tolerance", config.optimizer.param_tolerance},
                    {"value_tolerance", config.optimizer.value_tolerance},
                    {"max_iterations", config.optimizer.max_iterations},
                    {"bracket_step", config.optimizer.bracket_step}};
  j["probe"] = {{"axis",
                 {config.probe.axis.x(), config.probe.axis.y(), config.probe.axis.z()}},
                {"fp_distance_mm", config.probe.fp_distance_mm}};
  return j.dump(2);
}

RegistrationConfig registration_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(j,
             {"mode", "pyramid_levels", "final_level", "grid", "candidate_count",
              "candidate_min_distance", "attribute_level_cutoff", "min_overlap",
              "optimizer", "probe"},
             "top level");

  RegistrationMode mode = RegistrationMode::ThreeDThreeD;
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m == "3d3d") mode = RegistrationMode::ThreeDThreeD;
    else if (m == "3do2d") mode = RegistrationMode::ThreeDO2D;
    else throw Error("config: mode must be '3d3d' or '3do2d'");
  }
  RegistrationConfig config = RegistrationConfig::defaults(mode);

  if (j.contains("pyramid_levels")) config.pyramid_levels = j["pyramid_levels"].get<int>();
  if (j.contains("final_level")) config.final_level = j["final_level"].get<int>();
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, {"n_alpha", "n_beta", "n_lambda", "tilt_limit_deg"}, "grid");
    if (g.contains("n_alpha")) config.grid.n_alpha = g["n_alpha"].get<int>();
    if (g.contains("n_beta")) config.grid.n_beta = g["n_beta"].get<int>();
    if (g.contains("n_lambda")) config.grid.n_lambda = g["n_lambda"].get<int>();
    if (g.contains("tilt_limit_deg")) {
      config.grid.tilt_limit_deg = g["tilt_limit_deg"].get<double>();
    }
  }
  if (j.contains("candidate_count")) config.candidate_count = j["candidate_count"].get<int>();
  if (j.contains("candidate_min_distance")) {
    const json& d = j["candidate_min_distance"];
    check_keys(d, {"mm", "deg"}, "candidate_min_distance");
    if (d.contains("mm")) config.candidate_min_distance_mm = d["mm"].get<double>();
    if (d.contains("deg")) config.candidate_min_distance_deg = d["deg"].get<double>();
  }
  if (j.contains("attribute_level_cutoff")) {
    config.attribute_level_cutoff = j["attribute_level_cutoff"].get<int>();
  }
  if (j.contains("min_overlap")) config.min_overlap = j["min_overlap"].get<double>();
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    check_keys(o, {"param_tolerance", "value_tolerance", "max_iterations", "bracket_step"},
               "optimizer");
    if (o.contains("param_tolerance")) {
      config.optimizer.param_tolerance = o["param_tolerance"].get<double>();
    }
    if (o.contains("value_tolerance")) {
      config.optimizer.value_tolerance = o["value_tolerance"].get<double>();
    }
    if (o.contains("max_iterations")) {
      config.optimizer.max_iterations = o["max_iterations"].get<int>();
    }
    if (o.contains("bracket_step")) {
      config.optimizer.bracket_step = o["bracket_step"].get<double>();
    }
  }
  if (j.contains("probe")) {
    const json& p = j["probe"];
    check_keys(p, {"axis", "fp_distance_mm"}, "probe");
    if (p.contains("axis")) {
      const auto a = p["axis"].get<std::vector<double>>();
      if (a.size() != 3) throw Error("config: probe.axis expects 3 numbers");
      config.probe.axis = Vec3(a[0], a[1], a[2]).normalized();
    }
    if (p.contains("fp_distance_mm")) {
      config.probe.fp_distance_mm = p["fp_distance_mm"].get<double>();
    }
  }
  config.validate();
  return config;
}

}  // namespace vtrack
