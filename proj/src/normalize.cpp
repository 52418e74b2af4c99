#include "spcn/normalize.hpp"

#include <cmath>
#include <map>

#include "spcn/error.hpp"
#include "spcn/percentile.hpp"

namespace spcn {

StainStats stain_stats(const DensitySamples& samples) {
  StainStats stats;
  for (int s = 0; s < 2; ++s) {
    if (samples.stains[s].empty()) {
      throw Error(ErrorCode::stain_absent, "stain " + std::to_string(s) + " absent: no density samples");
    }
    stats.p99[s] = percentile(samples.stains[s], kStainPercentile);
  }
  stats.sample_count = samples.stains[0].size();
  return stats;
}

StainStats stain_stats(const PatchPercentiles& patches, std::size_t sample_count) {
  StainStats stats;
  for (int s = 0; s < 2; ++s) {
    if (patches.stains[s].empty()) {
      throw Error(ErrorCode::stain_absent, "stain " + std::to_string(s) + " absent: no patch percentiles");
    }
    stats.p99[s] = median(patches.stains[s]);
  }
  stats.sample_count = sample_count;
  return stats;
}

PatchPercentiles patch_percentiles(std::span<const double> densities, std::span<const std::uint32_t> patch_ids) {
  if (densities.size() != patch_ids.size() * 2) {
    throw Error(ErrorCode::invalid_argument, "one patch id per density pair expected");
  }
  std::map<std::uint32_t, DensitySamples> by_patch;
  for (std::size_t i = 0; i < patch_ids.size(); ++i) {
    auto& pools = by_patch[patch_ids[i]];
    pools.stains[0].push_back(densities[i * 2]);
    pools.stains[1].push_back(densities[i * 2 + 1]);
  }
  PatchPercentiles out;
  for (auto& [id, pools] : by_patch) {
    for (int s = 0; s < 2; ++s) out.stains[s].push_back(percentile(std::move(pools.stains[s]), kStainPercentile));
  }
  return out;
}

std::array<double, 2> scale_factors(const StainStats& source, const StainStats& target) {
  std::array<double, 2> factors{};
  for (int s = 0; s < 2; ++s) {
    if (!(source.p99[s] > 0.0) || !std::isfinite(source.p99[s])) {
      throw Error(ErrorCode::degenerate_stain,
                  "degenerate stain density: source p99 of stain " + std::to_string(s) + " is zero");
    }
    if (!(target.p99[s] > 0.0) || !std::isfinite(target.p99[s])) {
      throw Error(ErrorCode::degenerate_stain,
                  "degenerate stain density: target p99 of stain " + std::to_string(s) + " is zero");
    }
    factors[s] = target.p99[s] / source.p99[s];
  }
  return factors;
}

NormalizationKernel::NormalizationKernel(const std::array<double, 2>& factors, const StainBasis& target_basis,
                                         const MaxIntensity& target_i0)
    : i0_(target_i0) {
  validate(target_basis);
  validate(target_i0);
  for (int s = 0; s < 2; ++s) {
    if (!(factors[s] > 0.0) || !std::isfinite(factors[s])) {
      throw Error(ErrorCode::invalid_argument, "scale factors must be finite and positive");
    }
  }
  for (int c = 0; c < 3; ++c) {
    for (int s = 0; s < 2; ++s) mix_[c][s] = target_basis(c, s) * factors[s];
  }
}

PixelBlock normalize_block(const StainDensityBlock& h_source, const std::array<double, 2>& factors,
                           const StainBasis& target_basis, const MaxIntensity& target_i0) {
  const NormalizationKernel kernel(factors, target_basis, target_i0);
  PixelBlock out(0, 0, h_source.width, h_source.height);
  const std::int64_t n = h_source.pixel_count();
  for (std::int64_t i = 0; i < n; ++i) {
    kernel.apply({h_source.data[i * 2], h_source.data[i * 2 + 1]}, out.data.data() + i * 3);
  }
  return out;
}

void validate(const FitParams& params) {
  validate(params.i0);
  validate(params.basis);
  for (double p : params.stats.p99) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::invalid_argument, "stain percentiles must be finite and non-negative");
    }
  }
}

}  // namespace spcn
