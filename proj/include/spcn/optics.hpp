#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spcn/buffer_tracker.hpp"
#include "spcn/image_io.hpp"

namespace spcn {

using Warnings = std::vector<std::string>;

// Per-channel intensity that corresponds to zero optical density (the
// unstained background level), in [1, 255].
struct MaxIntensity {
  std::array<double, 3> rgb{255.0, 255.0, 255.0};

  friend bool operator==(const MaxIntensity&, const MaxIntensity&) = default;
};

void validate(const MaxIntensity& i0);

struct OpticsConfig {
  double white_threshold = 220.0;
  std::size_t sample_cap = 100'000;
  double percentile = 0.80;
};

// Channel values of white pixels (every channel above the white threshold),
// one pool per channel.
struct BrightSamples {
  std::array<std::vector<double>, 3> channels;
};

// 80th percentile per channel. A channel with an empty pool falls back to 255
// and records a warning (no discernible background). When `warnings` is null
// the warning goes to the process message sink instead.
MaxIntensity estimate_max_intensity(const BrightSamples& samples, const OpticsConfig& config = {},
                                    Warnings* warnings = nullptr);

using ODStorage = std::vector<double, TrackingAllocator<double, 3>>;

// Relative optical densities, three per pixel, row-major like PixelBlock.
struct ODBlock {
  std::int64_t width = 0;
  std::int64_t height = 0;
  ODStorage data;

  ODBlock() = default;
  ODBlock(std::int64_t w, std::int64_t h) : width(w), height(h), data(static_cast<std::size_t>(w * h * 3)) {}

  std::int64_t pixel_count() const noexcept { return width * height; }
};

inline double optical_density(double intensity, double i0) noexcept {
  const double clamped = std::clamp(intensity, 1.0, i0);
  return std::log(i0 / clamped);
}

inline std::uint8_t intensity_from_od(double od, double i0) noexcept {
  const double value = std::round(i0 * std::exp(-od));
  return static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
}

// optical_density for every 8-bit level, per channel; exact same values as the
// scalar function.
class ODTable {
 public:
  explicit ODTable(const MaxIntensity& i0);
  double operator()(int channel, std::uint8_t level) const noexcept { return table_[channel][level]; }

 private:
  std::array<std::array<double, 256>, 3> table_{};
};

ODBlock beer_lambert(const PixelBlock& block, const MaxIntensity& i0);

// The returned block has origin (0, 0); callers reposition it.
PixelBlock inverse_beer_lambert(const ODBlock& od, const MaxIntensity& i0);

}  // namespace spcn
