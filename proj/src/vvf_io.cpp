#include "vtrack/vvf_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace vtrack {

namespace {

constexpr const char* kKeys[] = {"vvf_version", "dims", "spacing_mm",
                                 "origin_mm",   "axes", "dtype", "mask"};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void put_f32le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t count,
                                  const std::string& key, std::size_t offset) {
  std::istringstream in(text);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  std::string rest;
  in.clear();
  in >> rest;
  if (!rest.empty() || out.size() != count) {
    throw FormatError("VVF: key '" + key + "' expects " + std::to_string(count) +
                          " numeric values",
                      offset);
  }
  return out;
}

}  // namespace

void write_volume(const Volume& volume, const std::string& path) {
  volume.validate();

  std::string header;
  header += "vvf_version = 1\n";
  header += "dims = " + std::to_string(volume.dims[0]) + " " +
            std::to_string(volume.dims[1]) + " " + std::to_string(volume.dims[2]) + "\n";
  header += "spacing_mm = " + format_double(volume.spacing.x()) + " " +
            format_double(volume.spacing.y()) + " " + format_double(volume.spacing.z()) + "\n";
  header += "origin_mm = " + format_double(volume.origin.x()) + " " +
            format_double(volume.origin.y()) + " " + format_double(volume.origin.z()) + "\n";
  header += "axes =";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) header += " " + format_double(volume.axes(r, c));
  }
  header += "\ndtype = f32le\n";
  header += std::string("mask = ") + (volume.mask.empty() ? "absent" : "present") + "\n";
  header += "END\n";

  std::string payload;
  payload.reserve(volume.data.size() * 4 + volume.mask.size());
  for (float v : volume.data) put_f32le(payload, v);
  for (std::uint8_t m : volume.mask) payload.push_back(static_cast<char>(m));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("write_volume: cannot open '" + path + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("write_volume: short write to '" + path + "'");
}

Volume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_volume: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  // Header: key offsets are remembered so invariant violations can point at
  // the line that declared them.
  std::map<std::string, std::pair<std::string, std::size_t>> fields;
  std::size_t pos = 0;
  bool saw_end = false;
  while (pos < buf.size()) {
    const std::size_t line_start = pos;
    const std::size_t nl = buf.find('\n', pos);
    if (nl == std::string::npos) {
      throw FormatError("VVF: header line without newline", line_start);
    }
    const std::string line = buf.substr(pos, nl - pos);
    pos = nl + 1;
    if (line == "END") {
      saw_end = true;
      break;
    }
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) {
      throw FormatError("VVF: header line is not 'key = value'", line_start);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) {
      throw FormatError("VVF: unknown header key '" + key + "'", line_start);
    }
    if (fields.count(key)) {
      throw FormatError("VVF: duplicate header key '" + key + "'", line_start);
    }
    fields[key] = {value, line_start};
  }
  if (!saw_end) throw FormatError("VVF: missing END terminator", buf.size());
  for (const char* k : kKeys) {
    if (!fields.count(k)) {
      throw FormatError(std::string("VVF: missing header key '") + k + "'", 0);
    }
  }

  const auto field = [&](const char* k) -> const std::pair<std::string, std::size_t>& {
    return fields.at(k);
  };

  if (field("vvf_version").first != "1") {
    throw FormatError("VVF: unsupported vvf_version '" + field("vvf_version").first + "'",
                      field("vvf_version").second);
  }
  if (field("dtype").first != "f32le") {
    throw FormatError("VVF: unsupported dtype '" + field("dtype").first + "'",
                      field("dtype").second);
  }
  const std::string& mask_decl = field("mask").first;
  if (mask_decl != "present" && mask_decl != "absent") {
    throw FormatError("VVF: mask must be 'present' or 'absent'", field("mask").second);
  }

  Volume v;
  {
    const auto d = parse_numbers(field("dims").first, 3, "dims", field("dims").second);
    for (int a = 0; a < 3; ++a) {
      if (d[a] < 1 || d[a] != std::floor(d[a])) {
        throw FormatError("VVF: dims must be positive integers", field("dims").second);
      }
      v.dims[a] = static_cast<int>(d[a]);
    }
  }
  {
    const auto s = parse_numbers(field("spacing_mm").first, 3, "spacing_mm",
                                 field("spacing_mm").second);
    v.spacing = Vec3(s[0], s[1], s[2]);
  }
  {
    const auto o = parse_numbers(field("origin_mm").first, 3, "origin_mm",
                                 field("origin_mm").second);
    v.origin = Vec3(o[0], o[1], o[2]);
  }
  {
    const auto a = parse_numbers(field("axes").first, 9, "axes", field("axes").second);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) v.axes(r, c) = a[3 * r + c];
    }
  }

  const std::size_t n = v.voxel_count();
  const std::size_t payload_bytes = n * 4 + (mask_decl == "present" ? n : 0);
  if (buf.size() - pos < payload_bytes) {
    throw FormatError("VVF: payload truncated, expected " + std::to_string(payload_bytes) +
                          " bytes after header",
                      buf.size());
  }
  if (buf.size() - pos > payload_bytes) {
    throw FormatError("VVF: trailing bytes after payload", pos + payload_bytes);
  }

  v.data.resize(n);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data()) + pos;
  for (std::size_t i = 0; i < n; ++i, p += 4) v.data[i] = get_f32le(p);
  if (mask_decl == "present") {
    v.mask.resize(n);
    for (std::size_t i = 0; i < n; ++i, ++p) {
      if (*p > 1) {
        throw FormatError("VVF: mask bytes must be 0 or 1",
                          pos + n * 4 + i);
      }
      v.mask[i] = *p;
    }
  }

  try {
    v.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("VVF: ") + e.what(), 0);
  }
  return v;
}

}  // namespace vtrack
