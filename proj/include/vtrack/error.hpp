#ifndef VTRACK_ERROR_HPP
#define VTRACK_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vtrack {

// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or truncated volume/cache file. Carries the byte offset at
// which parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Pyramid construction would shrink an axis below the minimum size.
class TooCoarse : public Error {
 public:
  using Error::Error;
};

// Slice-extraction frame origin lies outside the volume.
class OutOfBounds : public Error {
 public:
  using Error::Error;
};

// Rotation angle is at the axis-angle branch cut.
class NonCanonical : public Error {
 public:
  using Error::Error;
};

// Transform set too spread out to average meaningfully.
class Dispersed : public Error {
 public:
  using Error::Error;
};

// Rectal fixed point placed inside the prostate ellipsoid.
class FixedPointInside : public Error {
 public:
  using Error::Error;
};

// Panorama acquisitions do not overlap pairwise.
class NoOverlap : public Error {
 public:
  using Error::Error;
};

// Every exploration pose produced an undefined energy.
class AllUndefined : public Error {
 public:
  using Error::Error;
};

// Benchmark manifest references missing or invalid entries.
class ManifestError : public Error {
 public:
  using Error::Error;
};

// Phantom scene has no landmark of the queried kind.
class NoLandmarks : public Error {
 public:
  using Error::Error;
};

}  // namespace vtrack

#endif  // VTRACK_ERROR_HPP
