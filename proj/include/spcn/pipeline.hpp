#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "spcn/image_io.hpp"
#include "spcn/normalize.hpp"
#include "spcn/optics.hpp"
#include "spcn/stain_sep.hpp"

namespace spcn {

struct SamplePlan {
  int max_patches = 20;
  std::int64_t patch_size = 1000;
  std::size_t target_pixels = 100'000;
  // A patch whose non-white fraction is below (1 - cutoff) is background.
  double background_fraction_cutoff = 0.95;
  std::uint64_t seed = 0;
};

void validate(const SamplePlan& plan);

struct PatchRect {
  std::int64_t x = 0, y = 0, width = 0, height = 0;
};

struct PixelSample {
  // Non-white pixels (at least one channel <= white threshold), RGB interleaved.
  std::vector<std::uint8_t> rgb;
  // Index into `patches` for every non-white pixel.
  std::vector<std::uint32_t> patch_ids;
  BrightSamples bright;
  // Non-background patches that contributed pixels.
  std::vector<PatchRect> patches;
  int patches_visited = 0;

  std::size_t size() const noexcept { return patch_ids.size(); }
};

// Visits seeded-shuffled grid patches until target_pixels non-white pixels
// are collected, max_patches tissue patches were used, or 10 * max_patches
// patches were visited. Throws Error{blank_slide} if nothing non-white was
// found.
PixelSample sample_pixels(const SlideSource& slide, const SamplePlan& plan, const OpticsConfig& optics = {});

inline bool is_white(const std::uint8_t* rgb, double threshold) noexcept {
  return rgb[0] > threshold && rgb[1] > threshold && rgb[2] > threshold;
}

struct FitConfig {
  SamplePlan sampling;
  OpticsConfig optics;
  SnmfConfig snmf;
  // Sparsity weight used when coding densities for stats and transform.
  double code_lambda = 0.0;
  // Median of per-patch 99th percentiles instead of the pooled percentile.
  bool patch_stats = false;
};

// Hex SHA-256 of every setting that influences a fit.
std::string config_hash(const FitConfig& config);

struct FitReport {
  FitParams params;
  BasisFit basis_fit;
  double sampling_seconds = 0.0;
  double basis_seconds = 0.0;
  double stats_seconds = 0.0;
  int patches_sampled = 0;
  int patches_visited = 0;
  std::size_t pixels_sampled = 0;
  Warnings warnings;
};

// sample -> i0 -> basis -> stats. Errors carry the failing stage label.
// Warnings are collected in the report and also sent to the message sink.
FitReport fit_detailed(const SlideSource& slide, const FitConfig& config, const std::string& source_label = {});
FitParams fit(const SlideSource& slide, const FitConfig& config, const std::string& source_label = {});

struct TransformConfig {
  std::int64_t strip_height = kDefaultStripHeight;
  // 0 selects std::thread::hardware_concurrency().
  int workers = 0;
  double code_lambda = 0.0;
  // Called after each strip is committed, from the committing thread.
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct StripTiming {
  std::int64_t origin_y = 0;
  std::int64_t height = 0;
  std::int64_t pixels = 0;
  double seconds = 0.0;
};

struct RunStats {
  double sampling_seconds = 0.0;
  double basis_fit_seconds = 0.0;
  double stats_seconds = 0.0;
  double transform_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<StripTiming> strips;
  std::int64_t pixels = 0;
  std::int64_t pixels_sampled = 0;
  int patches = 0;
  int workers = 0;
};

int resolve_workers(int requested);

// Streams every strip through read -> Beer-Lambert(source i0) -> density
// coding(source basis) -> normalization(target basis, target i0) -> write.
// At most `workers` strips are alive at any time; output is committed in
// order and is identical for every strip height and worker count.
RunStats transform(const SlideSource& slide, const FitParams& source, const FitParams& target, ImageSink& out,
                   const TransformConfig& config = {});

// The per-pixel map applied by transform, for callers that hold a block.
void transform_block_in_place(PixelBlock& block, const FitParams& source, const FitParams& target,
                              double code_lambda);

// Columns: stage,seconds,pixels,patches. One row per stage plus one
// "strip_<n>" row per strip.
void write_run_stats_csv(std::ostream& out, const RunStats& stats);

}  // namespace spcn
