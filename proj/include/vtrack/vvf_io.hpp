#ifndef VTRACK_VVF_IO_HPP
#define VTRACK_VVF_IO_HPP

#include <string>

#include "vtrack/volume.hpp"

namespace vtrack {

// VVF/1 volume files: a text header of `key = value` lines terminated by
// `END\n`, followed by the raw little-endian f32 payload (x fastest) and,
// when declared, one 0/1 mask byte per voxel. Header keys, exactly:
//   vvf_version, dims, spacing_mm, origin_mm, axes, dtype, mask.
// Unknown or repeated keys, bad values, and short payloads all raise
// FormatError carrying the offending byte offset. write/read round-trips
// are bit-exact on every field.
Volume read_volume(const std::string& path);
void write_volume(const Volume& volume, const std::string& path);

}  // namespace vtrack

#endif  // VTRACK_VVF_IO_HPP
