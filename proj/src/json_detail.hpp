#ifndef VTRACK_SRC_JSON_DETAIL_HPP
#define VTRACK_SRC_JSON_DETAIL_HPP

#include "json.hpp"
#include "vtrack/error.hpp"
#include "vtrack/transform.hpp"

namespace vtrack::detail {

inline nlohmann::json transform_to_json(const RigidTransform& t) {
  nlohmann::json j;
  std::vector<double> rotation;
  rotation.reserve(9);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rotation.push_back(t.rotation(r, c));
  }
  j["rotation"] = rotation;
  j["translation_mm"] = {t.translation.x(), t.translation.y(), t.translation.z()};
  return j;
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  const auto rotation = j.at("rotation").get<std::vector<double>>();
  const auto translation = j.at("translation_mm").get<std::vector<double>>();
  if (rotation.size() != 9 || translation.size() != 3) {
    throw Error("transform JSON expects 9 rotation and 3 translation numbers");
  }
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rotation[3 * r + c];
  }
  t.translation = Vec3(translation[0], translation[1], translation[2]);
  if (!is_rotation(t.rotation, 1e-6)) {
    throw Error("transform JSON rotation is not orthonormal");
  }
  return t;
}

inline nlohmann::json vec3_to_json(const Vec3& v) {
  return nlohmann::json{v.x(), v.y(), v.z()};
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error("expected 3 numbers");
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace vtrack::detail

#endif  // VTRACK_SRC_JSON_DETAIL_HPP
