#include "vtrack/vvf_io.hpp"

#include <Eigen/Geometry>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vtrack/rng.hpp"

using namespace vtrack;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "vtrack_vvf_test";
  std::filesystem::create_directories(dir);
  return dir;
}

Volume random_volume(std::uint64_t seed, bool with_mask) {
  Rng rng(seed);
  Volume v;
  v.dims = {8, 8, 8};
  v.spacing = Vec3(rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5));
  v.origin = Vec3(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20));
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  axis.normalize();
  v.axes = Eigen::AngleAxisd(rng.uniform(0, 3.0), axis).toRotationMatrix();
  v.data.resize(v.voxel_count());
  for (auto& x : v.data) x = static_cast<float>(rng.gaussian() * 100.0);
  if (with_mask) {
    v.mask.resize(v.voxel_count());
    for (auto& m : v.mask) m = rng.next_double() < 0.8 ? 1 : 0;
  }
  return v;
}

void write_raw(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string valid_header(const std::string& dims = "2 2 2") {
  return "vvf_version = 1\ndims = " + dims +
         "\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\n"
         "axes = 1 0 0 0 1 0 0 0 1\ndtype = f32le\nmask = absent\nEND\n";
}

}  // namespace

TEST_CASE("round trip is bit exact") {
  const auto dir = temp_dir();
  for (int i = 0; i < 6; ++i) {
    const Volume v = random_volume(100 + i, i % 2 == 0);
    const auto path = (dir / ("rt_" + std::to_string(i) + ".vvf")).string();
    write_volume(v, path);
    const Volume back = read_volume(path);
    CHECK(back.dims == v.dims);
    CHECK((back.spacing - v.spacing).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.origin - v.origin).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.axes - v.axes).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.data == v.data);
    CHECK(back.mask == v.mask);
  }
}

TEST_CASE("truncated payload is rejected") {
  const auto dir = temp_dir();
  Volume v = random_volume(7, false);
  const auto path = (dir / "trunc.vvf").string();
  write_volume(v, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  bytes.resize(bytes.size() - 8 * 8 * 4);  // header says 8^3, payload holds 7x8x8
  write_raw(dir / "trunc.vvf", bytes);
  CHECK_THROWS_AS(read_volume(path), FormatError);
  try {
    read_volume(path);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
}

TEST_CASE("unknown header key names the key") {
  const auto dir = temp_dir();
  const auto path = (dir / "unknown.vvf").string();
  write_raw(path, "vvf_version = 1\nshear = 0.5\n" + valid_header().substr(16));
  try {
    read_volume(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("shear") != std::string::npos);
    CHECK(e.byte_offset() == 16);  // start of the offending line
  }
}

TEST_CASE("malformed header corpus") {
  const auto dir = temp_dir();
  const std::string payload(2 * 2 * 2 * 4, '\0');
  const std::vector<std::pair<std::string, std::string>> corpus = {
      {"bad_version", "vvf_version = 2\n" + valid_header().substr(16)},
      {"missing_end", "vvf_version = 1\ndims = 2 2 2\n"},
      {"bad_dims_count", valid_header("2 2")},
      {"bad_dims_value", valid_header("0 2 2")},
      {"bad_dims_text", valid_header("two 2 2")},
      {"duplicate_key", "vvf_version = 1\nvvf_version = 1\n" + valid_header().substr(16)},
      {"bad_dtype",
       "vvf_version = 1\ndims = 2 2 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\n"
       "axes = 1 0 0 0 1 0 0 0 1\ndtype = u8\nmask = absent\nEND\n"},
      {"bad_mask_decl",
       "vvf_version = 1\ndims = 2 2 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\n"
       "axes = 1 0 0 0 1 0 0 0 1\ndtype = f32le\nmask = maybe\nEND\n"},
      {"bad_spacing",
       "vvf_version = 1\ndims = 2 2 2\nspacing_mm = 1 1 99\norigin_mm = 0 0 0\n"
       "axes = 1 0 0 0 1 0 0 0 1\ndtype = f32le\nmask = absent\nEND\n"},
      {"bad_axes",
       "vvf_version = 1\ndims = 2 2 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\n"
       "axes = 2 0 0 0 1 0 0 0 1\ndtype = f32le\nmask = absent\nEND\n"},
      {"no_equals", "vvf_version: 1\n" + valid_header().substr(16)},
      {"trailing_bytes", valid_header() + payload + "x"},
  };
  for (const auto& [name, content] : corpus) {
    const auto path = (dir / (name + ".vvf")).string();
    const bool append_payload = name != "missing_end" && name != "trailing_bytes" &&
                                content.find("END\n") != std::string::npos;
    write_raw(path, append_payload ? content + payload : content);
    CAPTURE(name);
    CHECK_THROWS_AS(read_volume(path), FormatError);
  }
}

TEST_CASE("missing required key") {
  const auto dir = temp_dir();
  const auto path = (dir / "missing.vvf").string();
  write_raw(path,
            "vvf_version = 1\ndims = 2 2 2\nspacing_mm = 1 1 1\norigin_mm = 0 0 0\n"
            "dtype = f32le\nmask = absent\nEND\n" +
                std::string(32, '\0'));
  CHECK_THROWS_AS(read_volume(path), FormatError);
}
