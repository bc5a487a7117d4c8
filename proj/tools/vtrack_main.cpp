// vtrack: phantom generation, registration and evaluation front end.
//
// Exit codes: 0 success, 2 validation error (bad flags, malformed files),
// 3 registration failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vtrack/harness.hpp"
#include "vtrack/pipeline.hpp"
#include "vtrack/vvf_io.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRegistration = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vtrack::Error("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_text(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw vtrack::Error("cannot write '" + path + "'");
    out << text;
  }
  fs::rename(tmp, target);
}

bool parse_bbox(const std::string& text, vtrack::Vec3& lo, vtrack::Vec3& hi) {
  std::istringstream in(text);
  double v[6];
  char comma;
  for (int i = 0; i < 6; ++i) {
    if (i > 0 && !(in >> comma && comma == ',')) return false;
    if (!(in >> v[i])) return false;
  }
  std::string rest;
  if (in >> rest) return false;
  lo = vtrack::Vec3(v[0], v[1], v[2]);
  hi = vtrack::Vec3(v[3], v[4], v[5]);
  return true;
}

vtrack::RegistrationConfig load_config(const std::string& config_path,
                                       const std::string& mode_flag) {
  vtrack::RegistrationMode mode = mode_flag == "3do2d"
                                      ? vtrack::RegistrationMode::ThreeDO2D
                                      : vtrack::RegistrationMode::ThreeDThreeD;
  if (config_path.empty()) {
    return vtrack::RegistrationConfig::defaults(mode);
  }
  vtrack::RegistrationConfig config =
      vtrack::registration_config_from_json(read_text(config_path));
  if (!mode_flag.empty()) {
    // The command-line mode wins; re-derive mode-dependent defaults only
    // when the file did not pin them.
    if ((mode == vtrack::RegistrationMode::ThreeDO2D) !=
        (config.mode == vtrack::RegistrationMode::ThreeDO2D)) {
      throw vtrack::Error("--mode disagrees with the config file's mode");
    }
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRUS prostate tracking: phantom data, registration, evaluation"};
  app.require_subcommand(1);

  // --- phantom gen ---
  auto* phantom_cmd = app.add_subcommand("phantom", "phantom data generation");
  phantom_cmd->require_subcommand(1);
  auto* gen = phantom_cmd->add_subcommand("gen", "generate a phantom dataset");
  std::string gen_spec_path, gen_out_dir;
  int gen_count = 1;
  std::uint64_t gen_seed = 1;
  bool gen_panorama = false;
  gen->add_option("--spec", gen_spec_path, "phantom generation config JSON");
  gen->add_option("--out", gen_out_dir, "output directory")->required();
  gen->add_option("--count", gen_count, "number of tracking volumes")->required();
  gen->add_option("--seed", gen_seed, "dataset seed")->required();
  gen->add_flag("--panorama", gen_panorama,
                "compound the reference from three rolled cone acquisitions");

  // --- register ---
  auto* reg = app.add_subcommand("register", "register a tracking image to a reference");
  std::string reg_ref, reg_bbox, reg_mov, reg_mode = "3d3d", reg_config, reg_out;
  reg->add_option("--ref", reg_ref, "reference panorama VVF")->required();
  reg->add_option("--bbox", reg_bbox, "prostate box x0,y0,z0,x1,y1,z1 (mm)")->required();
  reg->add_option("--mov", reg_mov, "tracking volume VVF")->required();
  reg->add_option("--mode", reg_mode, "3d3d or 3do2d")
      ->check(CLI::IsMember({"3d3d", "3do2d"}));
  reg->add_option("--config", reg_config, "registration config JSON");
  reg->add_option("--out", reg_out, "result JSON path")->required();

  // --- precompute ---
  auto* pre = app.add_subcommand("precompute", "precompute exploration reslices");
  std::string pre_ref, pre_bbox, pre_config, pre_out, pre_like;
  pre->add_option("--ref", pre_ref, "reference panorama VVF")->required();
  pre->add_option("--bbox", pre_bbox, "prostate box x0,y0,z0,x1,y1,z1 (mm)")->required();
  pre->add_option("--config", pre_config, "registration config JSON");
  pre->add_option("--like", pre_like,
                  "acquisition VVF whose geometry the cache lattice follows "
                  "(default: the reference's)");
  pre->add_option("--out", pre_out, "cache output path")->required();

  // --- eval repro / eval bench ---
  auto* eval = app.add_subcommand("eval", "evaluation protocols");
  eval->require_subcommand(1);
  auto* repro = eval->add_subcommand("repro", "perturbed-restart reproducibility");
  std::string repro_pair, repro_noise = "2.0,2.0", repro_out;
  int repro_restarts = 10;
  std::uint64_t repro_seed = 1;
  repro->add_option("--pair", repro_pair, "pair JSON")->required();
  repro->add_option("--restarts", repro_restarts, "restart count");
  repro->add_option("--noise", repro_noise, "start noise mm,deg");
  repro->add_option("--seed", repro_seed, "perturbation seed");
  repro->add_option("--out", repro_out, "per-restart CSV path")->required();

  auto* bench = eval->add_subcommand("bench", "registration benchmark over a manifest");
  std::string bench_manifest, bench_config, bench_out;
  int bench_jobs = 0;
  bool bench_deterministic = false;
  bench->add_option("--manifest", bench_manifest, "dataset manifest JSON")->required();
  bench->add_option("--config", bench_config, "registration config JSON");
  bench->add_option("--out", bench_out, "report output directory")->required();
  bench->add_option("--jobs", bench_jobs, "worker count (default: hardware)");
  bench->add_flag("--deterministic", bench_deterministic,
                  "zero wall-clock fields so reports are bit-reproducible");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      vtrack::PhantomGenConfig config;
      if (!gen_spec_path.empty()) {
        config = vtrack::phantom_gen_config_from_json(read_text(gen_spec_path));
      }
      const std::string manifest = vtrack::generate_phantom_dataset(
          config, gen_out_dir, gen_count, gen_seed, gen_panorama);
      std::cout << "wrote " << manifest << "\n";
      return 0;
    }

    if (reg->parsed() || pre->parsed()) {
      const bool is_register = reg->parsed();
      const std::string& bbox_text = is_register ? reg_bbox : pre_bbox;
      vtrack::Vec3 lo, hi;
      if (!parse_bbox(bbox_text, lo, hi)) {
        std::cerr << "error: --bbox expects x0,y0,z0,x1,y1,z1\n";
        return kExitValidation;
      }
      const vtrack::RegistrationConfig config =
          load_config(is_register ? reg_config : pre_config, is_register ? reg_mode : "");
      const vtrack::Volume reference =
          vtrack::read_volume(is_register ? reg_ref : pre_ref);

      if (!is_register) {
        const vtrack::VolumeGeometry acq_geometry =
            pre_like.empty() ? vtrack::VolumeGeometry::of(reference)
                             : vtrack::VolumeGeometry::of(vtrack::read_volume(pre_like));
        const vtrack::PoseCache cache = vtrack::precompute_reference_cache(
            reference, lo, hi, acq_geometry, config);
        vtrack::write_cache(cache, pre_out);
        std::cout << "wrote " << pre_out << " (" << cache.n_poses << " poses x "
                  << cache.n_points_int << " points)\n";
        return 0;
      }

      const vtrack::Volume tracking = vtrack::read_volume(reg_mov);
      vtrack::RegistrationResult result;
      try {
        if (config.mode == vtrack::RegistrationMode::ThreeDO2D) {
          const vtrack::OrthoSlices slices = vtrack::extract_ortho_slices(
              tracking, tracking.axes, tracking.world_center());
          result = vtrack::register_slices(reference, lo, hi, slices, config);
        } else {
          result = vtrack::register_volumes(reference, lo, hi, tracking, config);
        }
      } catch (const vtrack::AllUndefined& e) {
        std::cerr << "registration failed: " << e.what() << "\n";
        return kExitRegistration;
      }
      write_text(reg_out, vtrack::registration_result_to_json(result) + "\n");
      std::cout << "wrote " << reg_out << (result.converged ? "" : " (non-converged)")
                << "\n";
      return 0;
    }

    if (repro->parsed()) {
      double noise_mm = 2.0, noise_deg = 2.0;
      {
        std::istringstream in(repro_noise);
        char comma;
        if (!(in >> noise_mm >> comma >> noise_deg) || comma != ',') {
          std::cerr << "error: --noise expects mm,deg\n";
          return kExitValidation;
        }
      }
      const nlohmann::json pair_json = nlohmann::json::parse(read_text(repro_pair));
      const std::string mode =
          pair_json.contains("mode") ? pair_json["mode"].get<std::string>() : "3d3d";
      vtrack::RegistrationConfig config = load_config(
          pair_json.contains("config") ? pair_json["config"].get<std::string>() : "",
          mode);

      namespace fs = std::filesystem;
      const fs::path base = fs::path(repro_pair).parent_path();
      vtrack::BenchmarkInput input;
      input.config = config;
      input.reference =
          vtrack::read_volume((base / pair_json.at("reference").get<std::string>()).string());
      const auto bbox = pair_json.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 6) throw vtrack::Error("pair: bbox expects 6 numbers");
      input.bbox_lo = vtrack::Vec3(bbox[0], bbox[1], bbox[2]);
      input.bbox_hi = vtrack::Vec3(bbox[3], bbox[4], bbox[5]);
      vtrack::BenchmarkPair pair;
      pair.id = "pair";
      pair.tracking =
          vtrack::read_volume((base / pair_json.at("moving").get<std::string>()).string());

      const vtrack::ReproducibilityResult result = vtrack::run_reproducibility(
          input, pair, repro_restarts, noise_mm, noise_deg, repro_seed);

      std::string csv = "restart,ok,eps_e_mm,eps_a_deg\n";
      std::size_t k = 0;
      for (std::size_t i = 0; i < result.run_ok.size(); ++i) {
        if (result.run_ok[i]) {
          csv += std::to_string(i) + ",1," + std::to_string(result.eps_e_mm[k]) + "," +
                 std::to_string(result.eps_a_deg[k]) + "\n";
          ++k;
        } else {
          csv += std::to_string(i) + ",0,nan,nan\n";
        }
      }
      write_text(repro_out, csv);
      std::cout << "eps_e rms " << vtrack::rms(result.eps_e_mm) << " mm, eps_a rms "
                << vtrack::rms(result.eps_a_deg) << " deg over "
                << result.eps_e_mm.size() << " runs\n";
      return 0;
    }

    if (bench->parsed()) {
      const vtrack::RegistrationConfig config = load_config(bench_config, "");
      const vtrack::BenchmarkInput input = vtrack::load_manifest(bench_manifest, config);
      const vtrack::ExperimentReport report =
          vtrack::run_benchmark(input, bench_jobs, bench_deterministic);
      write_text((std::filesystem::path(bench_out) / "report.csv").string(),
                 vtrack::report_to_csv(report));
      write_text((std::filesystem::path(bench_out) / "report.json").string(),
                 vtrack::report_to_json(report) + "\n");
      std::cout << "success " << report.aggregates.n_success << "/"
                << report.aggregates.n_pairs << "\n";
      return 0;
    }
  } catch (const vtrack::AllUndefined& e) {
    std::cerr << "registration failed: " << e.what() << "\n";
    return kExitRegistration;
  } catch (const vtrack::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
