#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "spcn/pipeline.hpp"

namespace spcn {

struct BenchRow {
  std::int64_t edge = 0;
  std::string stage;
  double seconds = 0.0;
  std::int64_t pixels = 0;
  int patches = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  // fit time (sampling + basis fit + stats) of the largest edge over the smallest.
  double fit_time_ratio = 0.0;
  // transform seconds-per-pixel of the largest edge over the smallest.
  double per_pixel_time_ratio = 0.0;

  double seconds(std::int64_t edge, const std::string& stage) const;
};

// For every square edge: materialize a seeded synthetic slide as a tiled TIFF
// in `workdir` (untimed), then time fit and transform on it. Files are removed
// afterwards.
BenchResult run_bench(std::span<const std::int64_t> edges, const FitConfig& fit_config,
                      const TransformConfig& transform_config, const std::filesystem::path& workdir,
                      const std::function<void(const std::string&)>& progress = {});

// Parses "512,1024,2048". Throws Error{invalid_argument}.
std::vector<std::int64_t> parse_edge_list(const std::string& text);

// Columns: edge,stage,seconds,pixels,patches.
void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace spcn
