#include "spcn/synthetic.hpp"

#include <cmath>

#include "spcn/error.hpp"
#include "spcn/random.hpp"

namespace spcn {
namespace {

constexpr std::int64_t kCell = 20;        // nucleus lattice pitch, pixels
constexpr double kTissueScale = 192.0;    // tissue blob size, pixels
constexpr double kStromaScale = 48.0;     // eosin texture scale, pixels

constexpr std::uint64_t kSaltTissue = 0x7157;
constexpr std::uint64_t kSaltStroma = 0x57a0;
constexpr std::uint64_t kSaltNucleus = 0x0c11;
constexpr std::uint64_t kSaltPixel = 0x9e11;

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace

SyntheticSlide::SyntheticSlide(SyntheticSlideSpec spec) : spec_(std::move(spec)) {
  if (spec_.width < 1 || spec_.height < 1) throw Error(ErrorCode::invalid_argument, "synthetic slide needs a size");
  validate(spec_.basis);
  validate(spec_.i0);
  if (!(spec_.cross_stain >= 0.0 && spec_.cross_stain <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "cross_stain must lie in [0, 1]");
  }
}

double SyntheticSlide::hash_unit(std::int64_t x, std::int64_t y, std::uint64_t salt) const noexcept {
  std::uint64_t h = splitmix64(spec_.seed ^ (salt * 0x100000001b3ULL));
  h = splitmix64(h ^ static_cast<std::uint64_t>(x));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(y) << 1));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double SyntheticSlide::value_noise(double x, double y, std::uint64_t salt) const noexcept {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double a = hash_unit(ix, iy, salt), b = hash_unit(ix + 1, iy, salt);
  const double c = hash_unit(ix, iy + 1, salt), d = hash_unit(ix + 1, iy + 1, salt);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

bool SyntheticSlide::in_tissue(std::int64_t x, std::int64_t y) const noexcept {
  switch (spec_.layout) {
    case SyntheticSlideSpec::Layout::blank:
      return false;
    case SyntheticSlideSpec::Layout::rectangle:
      return x >= spec_.rect_x && x < spec_.rect_x + spec_.rect_w && y >= spec_.rect_y &&
             y < spec_.rect_y + spec_.rect_h;
    case SyntheticSlideSpec::Layout::tissue:
      break;
  }
  // Bilinear noise concentrates near 0.5; stretch before thresholding so the
  // covered fraction tracks tissue_coverage.
  const double n = value_noise(x / kTissueScale, y / kTissueScale, kSaltTissue);
  const double stretched = std::clamp((n - 0.5) * 1.6 + 0.5, 0.0, 1.0);
  return stretched < spec_.tissue_coverage;
}

std::array<double, 2> SyntheticSlide::density_at(std::int64_t x, std::int64_t y) const noexcept {
  if (!in_tissue(x, y)) return {0.0, 0.0};
  const double jitter = hash_unit(x, y, kSaltPixel);

  // One candidate nucleus per lattice cell, fully contained in its cell.
  const std::int64_t cx = x / kCell, cy = y / kCell;
  if (hash_unit(cx, cy, kSaltNucleus) < 0.55) {
    const double radius = 3.0 + 4.0 * hash_unit(cx, cy, kSaltNucleus + 1);
    const double span = static_cast<double>(kCell) - 2.0 * radius;
    const double ox = cx * kCell + radius + span * hash_unit(cx, cy, kSaltNucleus + 2);
    const double oy = cy * kCell + radius + span * hash_unit(cx, cy, kSaltNucleus + 3);
    const double dx = x + 0.5 - ox, dy = y + 0.5 - oy;
    if (dx * dx + dy * dy <= radius * radius) {
      const double h = 0.55 + 0.65 * jitter;
      const bool mixed = hash_unit(x, y, kSaltPixel + 1) < spec_.cross_stain;
      const double e = mixed ? 0.05 + 0.1 * hash_unit(x, y, kSaltPixel + 2) : 0.0;
      return {h, e};
    }
  }
  const double texture = value_noise(x / kStromaScale, y / kStromaScale, kSaltStroma);
  const double e = 0.25 + 0.5 * texture + 0.15 * jitter;
  const double h = hash_unit(x, y, kSaltPixel + 3) < spec_.cross_stain ? 0.05 + 0.1 * hash_unit(x, y, kSaltPixel + 4) : 0.0;
  return {h, e};
}

void SyntheticSlide::pixel_at(std::int64_t x, std::int64_t y, std::uint8_t* rgb) const noexcept {
  const auto h = density_at(x, y);
  for (int c = 0; c < 3; ++c) {
    const double od = spec_.basis(c, 0) * h[0] + spec_.basis(c, 1) * h[1];
    rgb[c] = intensity_from_od(od, spec_.i0.rgb[c]);
  }
}

void SyntheticSlide::read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                               std::span<std::uint8_t> out) const {
  std::uint8_t* p = out.data();
  for (std::int64_t row = 0; row < h; ++row) {
    for (std::int64_t col = 0; col < w; ++col, p += 3) pixel_at(x + col, y + row, p);
  }
}

void write_synthetic_tiff(const std::filesystem::path& path, const SyntheticSlideSpec& spec,
                          const TiffWriteOptions& options, std::int64_t strip_height) {
  const SyntheticSlide slide(spec);
  auto sink = open_tiff_sink(path, spec.width, spec.height, options);
  copy_slide(slide, *sink, strip_height);
}

SyntheticSlideSpec demo_source_spec() {
  SyntheticSlideSpec spec;
  spec.width = 640;
  spec.height = 480;
  spec.seed = 11;
  spec.basis = StainBasis::from_columns(unit({0.55, 0.78, 0.30}), unit({0.15, 0.95, 0.25}));
  spec.i0.rgb = {246.0, 240.0, 232.0};
  spec.tissue_coverage = 0.55;
  spec.cross_stain = 0.2;
  return spec;
}

SyntheticSlideSpec demo_target_spec() {
  SyntheticSlideSpec spec;
  spec.width = 512;
  spec.height = 512;
  spec.seed = 23;
  spec.tissue_coverage = 0.65;
  spec.cross_stain = 0.2;
  return spec;
}

}  // namespace spcn
