#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "spcn/image_io.hpp"
#include "spcn/optics.hpp"
#include "spcn/stain_sep.hpp"

namespace spcn {

// Procedural H&E-like slide whose every pixel is exactly
//   round(i0 * exp(-W h(x, y)))
// for a known basis W and density field h, so the stain model holds up to
// 8-bit rounding. Pixels are computed from (seed, x, y) alone, which makes
// reads random-access, repeatable, and thread-safe.
struct SyntheticSlideSpec {
  enum class Layout {
    tissue,     // blobby tissue covering roughly `tissue_coverage` of the area
    rectangle,  // tissue only inside `rect`
    blank,      // background everywhere
  };

  std::int64_t width = 512;
  std::int64_t height = 512;
  std::uint64_t seed = 1;
  StainBasis basis = reference_basis();
  MaxIntensity i0;
  Layout layout = Layout::tissue;
  double tissue_coverage = 0.6;
  // Fraction of nucleus and stroma pixels that also pick up a faint
  // (0.05-0.15) density of the other stain. 0 keeps every structure
  // single-stained.
  double cross_stain = 0.0;
  std::int64_t rect_x = 0, rect_y = 0, rect_w = 0, rect_h = 0;
};

class SyntheticSlide final : public SlideSource {
 public:
  explicit SyntheticSlide(SyntheticSlideSpec spec);

  std::int64_t width() const override { return spec_.width; }
  std::int64_t height() const override { return spec_.height; }
  const SyntheticSlideSpec& spec() const noexcept { return spec_; }

  // Ground-truth (hematoxylin, eosin) densities at a pixel.
  std::array<double, 2> density_at(std::int64_t x, std::int64_t y) const noexcept;
  void pixel_at(std::int64_t x, std::int64_t y, std::uint8_t* rgb) const noexcept;

 protected:
  void read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                 std::span<std::uint8_t> out) const override;

 private:
  bool in_tissue(std::int64_t x, std::int64_t y) const noexcept;
  double value_noise(double x, double y, std::uint64_t salt) const noexcept;
  double hash_unit(std::int64_t x, std::int64_t y, std::uint64_t salt) const noexcept;

  SyntheticSlideSpec spec_;
};

void write_synthetic_tiff(const std::filesystem::path& path, const SyntheticSlideSpec& spec,
                          const TiffWriteOptions& options = {}, std::int64_t strip_height = kDefaultStripHeight);

// The two bundled demo images: a purple-shifted source on a tinted
// background and a reference-colored target on white.
SyntheticSlideSpec demo_source_spec();
SyntheticSlideSpec demo_target_spec();

}  // namespace spcn
