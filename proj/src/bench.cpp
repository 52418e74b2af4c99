#include "spcn/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ostream>

#include "spcn/error.hpp"
#include "spcn/synthetic.hpp"

namespace spcn {

double BenchResult::seconds(std::int64_t edge, const std::string& stage) const {
  for (const auto& row : rows) {
    if (row.edge == edge && row.stage == stage) return row.seconds;
  }
  throw Error(ErrorCode::invalid_argument, "no bench row for " + stage + " at edge " + std::to_string(edge));
}

std::vector<std::int64_t> parse_edge_list(const std::string& text) {
  std::vector<std::int64_t> edges;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto token = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::int64_t value = 0;
    const auto r = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || r.ec != std::errc{} || r.ptr != token.data() + token.size() || value < 16 ||
        value > 65536) {
      throw Error(ErrorCode::invalid_argument, "invalid size '" + token + "' (expected edges in [16, 65536])");
    }
    edges.push_back(value);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (edges.empty()) throw Error(ErrorCode::invalid_argument, "empty size list");
  return edges;
}

BenchResult run_bench(std::span<const std::int64_t> edges, const FitConfig& fit_config,
                      const TransformConfig& transform_config, const std::filesystem::path& workdir,
                      const std::function<void(const std::string&)>& progress) {
  if (edges.empty()) throw Error(ErrorCode::invalid_argument, "no bench sizes");
  std::filesystem::create_directories(workdir);
  BenchResult result;
  for (const auto edge : edges) {
    SyntheticSlideSpec spec;
    spec.width = spec.height = edge;
    spec.seed = 1000 + static_cast<std::uint64_t>(edge);
    const auto input = workdir / ("bench_" + std::to_string(edge) + ".tif");
    const auto output = workdir / ("bench_" + std::to_string(edge) + "_out.tif");
    if (progress) progress("generating " + std::to_string(edge) + "x" + std::to_string(edge) + " slide");
    write_synthetic_tiff(input, spec, {.compression = TiffCompression::none});

    const auto slide = open_slide(input);
    if (progress) progress("fitting " + std::to_string(edge));
    const FitReport report = fit_detailed(*slide, fit_config, input.string());
    if (progress) progress("transforming " + std::to_string(edge));
    RunStats stats;
    {
      auto sink = open_tiff_sink(output, edge, edge, {.compression = TiffCompression::none});
      stats = transform(*slide, report.params, report.params, *sink, transform_config);
    }
    const std::int64_t area = edge * edge;
    const auto sampled = static_cast<std::int64_t>(report.pixels_sampled);
    const double fit_seconds = report.sampling_seconds + report.basis_seconds + report.stats_seconds;
    result.rows.push_back({edge, "sampling", report.sampling_seconds, sampled, report.patches_sampled});
    result.rows.push_back({edge, "basis_fit", report.basis_seconds, sampled, report.patches_sampled});
    result.rows.push_back({edge, "stain_stats", report.stats_seconds, sampled, report.patches_sampled});
    result.rows.push_back({edge, "fit", fit_seconds, sampled, report.patches_sampled});
    result.rows.push_back({edge, "transform", stats.transform_seconds, area, 0});
    result.rows.push_back({edge, "total", fit_seconds + stats.transform_seconds, area, report.patches_sampled});

    std::error_code ec;
    std::filesystem::remove(input, ec);
    std::filesystem::remove(output, ec);
  }
  const auto [lo, hi] = std::minmax_element(edges.begin(), edges.end());
  const double small_area = static_cast<double>(*lo) * static_cast<double>(*lo);
  const double large_area = static_cast<double>(*hi) * static_cast<double>(*hi);
  result.fit_time_ratio = result.seconds(*hi, "fit") / result.seconds(*lo, "fit");
  result.per_pixel_time_ratio =
      (result.seconds(*hi, "transform") / large_area) / (result.seconds(*lo, "transform") / small_area);
  return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
  out << "edge,stage,seconds,pixels,patches\n";
  for (const auto& row : result.rows) {
    out << row.edge << ',' << row.stage << ',' << row.seconds << ',' << row.pixels << ',' << row.patches << '\n';
  }
}

}  // namespace spcn
