#include "spcn/optics.hpp"

#include <sstream>

#include "spcn/diagnostics.hpp"
#include "spcn/error.hpp"
#include "spcn/percentile.hpp"

namespace spcn {

void validate(const MaxIntensity& i0) {
  for (double v : i0.rgb) {
    if (!(v >= 1.0 && v <= 255.0)) {
      throw Error(ErrorCode::invalid_argument, "max intensity components must lie in [1, 255]");
    }
  }
}

MaxIntensity estimate_max_intensity(const BrightSamples& samples, const OpticsConfig& config,
                                    Warnings* warnings) {
  static constexpr const char* kNames[] = {"red", "green", "blue"};
  MaxIntensity i0;
  for (int c = 0; c < 3; ++c) {
    const auto& pool = samples.channels[c];
    if (pool.empty()) {
      i0.rgb[c] = 255.0;
      std::ostringstream msg;
      msg << "no " << kNames[c] << " samples above " << config.white_threshold
          << "; using 255 (no discernible background)";
      if (warnings) {
        warnings->push_back(msg.str());
      } else {
        warn(msg.str());
      }
      continue;
    }
    i0.rgb[c] = std::clamp(percentile(pool, config.percentile), 1.0, 255.0);
  }
  return i0;
}

ODTable::ODTable(const MaxIntensity& i0) {
  validate(i0);
  for (int c = 0; c < 3; ++c) {
    for (int level = 0; level < 256; ++level) {
      table_[c][level] = optical_density(static_cast<double>(level), i0.rgb[c]);
    }
  }
}

ODBlock beer_lambert(const PixelBlock& block, const MaxIntensity& i0) {
  const ODTable table(i0);
  ODBlock od(block.width, block.height);
  const std::size_t n = block.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    od.data[i] = table(static_cast<int>(i % 3), block.data[i]);
  }
  return od;
}

PixelBlock inverse_beer_lambert(const ODBlock& od, const MaxIntensity& i0) {
  validate(i0);
  PixelBlock out(0, 0, od.width, od.height);
  const std::size_t n = od.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = intensity_from_od(od.data[i], i0.rgb[i % 3]);
  }
  return out;
}

}  // namespace spcn
