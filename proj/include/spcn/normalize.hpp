#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcn/image_io.hpp"
#include "spcn/optics.hpp"
#include "spcn/stain_sep.hpp"

namespace spcn {

struct StainStats {
  std::array<double, 2> p99{0.0, 0.0};
  std::size_t sample_count = 0;

  friend bool operator==(const StainStats&, const StainStats&) = default;
};

// Per-stain density pools from non-white pixels.
struct DensitySamples {
  std::array<std::vector<double>, 2> stains;
};

// Per-stain lists of per-patch 99th percentiles.
struct PatchPercentiles {
  std::array<std::vector<double>, 2> stains;
};

inline constexpr double kStainPercentile = 0.99;

// Direct 99th percentile of each pool. Throws Error{stain_absent} when a
// stain pool is empty.
StainStats stain_stats(const DensitySamples& samples);

// Median over patches of the per-patch 99th percentiles.
StainStats stain_stats(const PatchPercentiles& patches, std::size_t sample_count);

// Splits densities (2 per pixel) by patch id and takes each patch's p99.
PatchPercentiles patch_percentiles(std::span<const double> densities, std::span<const std::uint32_t> patch_ids);

// target.p99 / source.p99 per stain. Throws Error{degenerate_stain} if either
// side has a zero (or non-finite) percentile.
std::array<double, 2> scale_factors(const StainStats& source, const StainStats& target);

// Maps source stain densities to target colors:
//   v' = W_target * diag(factors) * h, then i = round(i0 * exp(-v')).
// Every block-level and streaming path goes through this kernel.
class NormalizationKernel {
 public:
  NormalizationKernel(const std::array<double, 2>& factors, const StainBasis& target_basis,
                      const MaxIntensity& target_i0);

  void apply(const std::array<double, 2>& h, std::uint8_t* rgb_out) const noexcept {
    for (int c = 0; c < 3; ++c) {
      const double od = mix_[c][0] * h[0] + mix_[c][1] * h[1];
      rgb_out[c] = intensity_from_od(od, i0_.rgb[c]);
    }
  }

 private:
  std::array<std::array<double, 2>, 3> mix_{};
  MaxIntensity i0_;
};

PixelBlock normalize_block(const StainDensityBlock& h_source, const std::array<double, 2>& factors,
                           const StainBasis& target_basis, const MaxIntensity& target_i0);

struct Provenance {
  std::string source;
  std::string config_hash;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// Everything learned from one image.
struct FitParams {
  MaxIntensity i0;
  StainBasis basis;
  StainStats stats;
  Provenance provenance;

  friend bool operator==(const FitParams&, const FitParams&) = default;
};

void validate(const FitParams& params);

// Versioned key = value profile text. Reals are written with 17 significant
// digits so parse(format(p)) == p bit for bit.
//
//   spcn-profile 1
//   i0 = <red> <green> <blue>
//   basis = <w_r0> <w_r1> <w_g0> <w_g1> <w_b0> <w_b1>     (3x2 row-major)
//   p99 = <hematoxylin> <eosin>
//   sample_count = <n>
//   source = <path>
//   config_hash = <hex>
std::string format_profile(const FitParams& params);
FitParams parse_profile(const std::string& text);

void write_profile(const std::filesystem::path& path, const FitParams& params);
FitParams read_profile(const std::filesystem::path& path);
bool is_profile_file(const std::filesystem::path& path);

}  // namespace spcn
