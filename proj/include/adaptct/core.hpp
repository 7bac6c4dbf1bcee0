#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adaptct {

/// Raised when an argument lies outside an operation's domain
/// (bad angle, mismatched sizes, empty inputs).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for invalid configuration values or unknown configuration keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an object is used in a state that does not permit the call.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for malformed or corrupted files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of candidate scan angles: integer degrees 0..179.
inline constexpr int kAngleCount = 180;

/// Square grayscale image, row-major, values nominally in [0, 1].
struct Image {
  int side = 0;
  std::vector<double> pixels;

  Image() = default;
  explicit Image(int side_px, double fill = 0.0)
      : side(side_px), pixels(static_cast<std::size_t>(side_px) * side_px, fill) {
    if (side_px <= 0) throw DomainError("image side must be positive");
  }

  std::size_t size() const { return pixels.size(); }
  double& operator()(int row, int col) { return pixels[static_cast<std::size_t>(row) * side + col]; }
  double operator()(int row, int col) const { return pixels[static_cast<std::size_t>(row) * side + col]; }
  std::span<const double> values() const { return pixels; }
  std::span<double> values() { return pixels; }

  friend bool operator==(const Image&, const Image&) = default;
};

inline void check_angle(int angle_deg) {
  if (angle_deg < 0 || angle_deg >= kAngleCount)
    throw DomainError("angle " + std::to_string(angle_deg) + " outside [0,180)");
}

}  // namespace adaptct
