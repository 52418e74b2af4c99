#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <unistd.h>

#include "spcn/bench.hpp"
#include "spcn/diagnostics.hpp"
#include "spcn/image_io.hpp"
#include "spcn/normalize.hpp"
#include "spcn/synthetic.hpp"

namespace spcn::cli {

int exit_code_for(const Error& error) {
  switch (error.code()) {
    case ErrorCode::invalid_argument:
    case ErrorCode::unsupported_format:
    case ErrorCode::corrupt_file:
      return kBadInput;
    case ErrorCode::blank_slide:
    case ErrorCode::insufficient_pixels:
      return kBlankSlide;
    case ErrorCode::stain_absent:
    case ErrorCode::degenerate_stain:
      return kDegenerateStain;
    case ErrorCode::out_of_bounds:
    case ErrorCode::out_of_order:
    case ErrorCode::io_error:
      return kWriteFailure;
  }
  return kWriteFailure;
}

TransformConfig CliConfig::transform_config() const {
  TransformConfig t;
  t.strip_height = strip_height;
  t.workers = workers;
  t.code_lambda = fit.code_lambda;
  if (verbose) {
    t.progress = [](std::size_t done, std::size_t total) {
      info("strip " + std::to_string(done) + "/" + std::to_string(total) + " written");
    };
  }
  return t;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string describe(const Error& e) {
  std::string text = "spcn: ";
  if (!e.stage().empty()) text += "[" + e.stage() + "] ";
  text += std::string(to_string(e.code())) + ": " + e.what();
  return text;
}

void require_writable_image_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".png" && ext != ".tif" && ext != ".tiff" && ext != ".btf") {
    throw Error(ErrorCode::invalid_argument, "output must end in .tif, .tiff or .png: " + path.string());
  }
}

void report_fit(const std::string& label, const FitReport& report) {
  std::ostringstream msg;
  msg << std::setprecision(4) << label << ": sampled " << report.pixels_sampled << " px from "
      << report.patches_sampled << " patches (" << report.patches_visited << " visited) in "
      << report.sampling_seconds << " s; i0 = (" << report.params.i0.rgb[0] << ", " << report.params.i0.rgb[1]
      << ", " << report.params.i0.rgb[2] << "); basis fit " << report.basis_fit.iterations << " iterations in "
      << report.basis_seconds << " s; p99 = (" << report.params.stats.p99[0] << ", "
      << report.params.stats.p99[1] << ")";
  info(msg.str());
}

FitReport fit_image(const std::filesystem::path& path, const CliConfig& config) {
  const auto slide = open_slide(path);
  info("fitting " + path.string() + " (" + std::to_string(slide->width()) + "x" +
       std::to_string(slide->height()) + ")");
  FitReport report = fit_detailed(*slide, config.fit, path.string());
  report_fit(path.string(), report);
  return report;
}

// A target given as either an image or a saved profile.
FitParams load_target(const std::filesystem::path& target, const CliConfig& config) {
  if (is_profile_file(target)) {
    info("using target profile " + target.string());
    return read_profile(target);
  }
  return fit_image(target, config).params;
}

void write_stats_csv(const std::filesystem::path& path, const RunStats& stats) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot create " + path.string());
  write_run_stats_csv(out, stats);
  if (!out) throw Error(ErrorCode::io_error, "failed writing " + path.string());
}

RunStats normalize_one(const std::filesystem::path& source_path, const FitParams* source_profile,
                       const FitParams& target, const std::filesystem::path& out_path, const CliConfig& config) {
  const auto start = Clock::now();
  const auto slide = open_slide(source_path);
  RunStats stats;
  FitParams source;
  if (source_profile) {
    source = *source_profile;
  } else {
    const FitReport report = fit_image(source_path, config);
    source = report.params;
    stats.sampling_seconds = report.sampling_seconds;
    stats.basis_fit_seconds = report.basis_seconds;
    stats.stats_seconds = report.stats_seconds;
    stats.pixels_sampled = static_cast<std::int64_t>(report.pixels_sampled);
    stats.patches = report.patches_sampled;
  }
  auto sink = open_sink(out_path, slide->width(), slide->height());
  info("normalizing " + source_path.string() + " -> " + out_path.string());
  const RunStats run = transform(*slide, source, target, *sink, config.transform_config());
  stats.strips = run.strips;
  stats.pixels = run.pixels;
  stats.workers = run.workers;
  stats.transform_seconds = run.transform_seconds;
  stats.total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return stats;
}

int cmd_fit(const std::filesystem::path& input, const std::filesystem::path& profile, const CliConfig& config) {
  const FitReport report = fit_image(input, config);
  write_profile(profile, report.params);
  std::cout << profile.string() << '\n';
  return kOk;
}

int cmd_normalize(const std::filesystem::path& source, const std::filesystem::path& target,
                  const std::filesystem::path& source_profile, const std::filesystem::path& out,
                  const CliConfig& config) {
  require_writable_image_path(out);
  const FitParams target_params = load_target(target, config);
  std::optional<FitParams> source_params;
  if (!source_profile.empty()) source_params = read_profile(source_profile);
  const RunStats stats = normalize_one(source, source_params ? &*source_params : nullptr, target_params, out, config);
  if (!config.stats_csv.empty()) write_stats_csv(config.stats_csv, stats);
  std::cout << out.string() << '\n';
  return kOk;
}

int cmd_batch(const std::filesystem::path& source_dir, const std::filesystem::path& target,
              const std::filesystem::path& out_dir, const CliConfig& config) {
  std::error_code ec;
  if (!std::filesystem::is_directory(source_dir, ec)) {
    throw Error(ErrorCode::invalid_argument, "not a directory: " + source_dir.string());
  }
  std::vector<std::filesystem::path> inputs;
  for (const auto& entry : std::filesystem::directory_iterator(source_dir)) {
    if (entry.is_regular_file() && is_supported_image_extension(entry.path())) inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw Error(ErrorCode::invalid_argument, "no images in " + source_dir.string());

  const FitParams target_params = load_target(target, config);
  std::filesystem::create_directories(out_dir);

  struct Outcome {
    std::string name;
    int code = kOk;
    std::string message;
  };
  std::vector<Outcome> outcomes;
  for (const auto& input : inputs) {
    auto out = out_dir / input.filename();
    std::string ext = out.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext != ".png" && ext != ".tif" && ext != ".tiff") out.replace_extension(".tif");
    try {
      normalize_one(input, nullptr, target_params, out, config);
      std::cout << out.string() << '\n';
      outcomes.push_back({input.filename().string(), kOk, "ok"});
    } catch (const Error& e) {
      std::cerr << describe(e) << '\n';
      std::filesystem::remove(out, ec);
      outcomes.push_back({input.filename().string(), exit_code_for(e), e.what()});
    }
  }

  const auto failures = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.code != kOk; });
  if (failures == 0) return kOk;
  std::size_t width = 4;
  for (const auto& o : outcomes) width = std::max(width, o.name.size());
  std::cerr << "batch summary: " << failures << " of " << outcomes.size() << " failed\n";
  std::cerr << std::left << std::setw(static_cast<int>(width)) << "file" << "  code  result\n";
  for (const auto& o : outcomes) {
    std::cerr << std::left << std::setw(static_cast<int>(width)) << o.name << "  " << std::setw(4) << o.code << "  "
              << (o.code == kOk ? "ok" : "FAILED: " + o.message) << '\n';
  }
  return kBatchFailures;
}

int cmd_bench(const std::string& sizes, const CliConfig& config) {
  const auto edges = parse_edge_list(sizes);
  const auto workdir = std::filesystem::temp_directory_path() / ("spcn-bench-" + std::to_string(::getpid()));
  BenchResult result;
  try {
    result = run_bench(edges, config.fit, config.transform_config(), workdir, [](const std::string& m) { info(m); });
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove_all(workdir, ec);
    throw;
  }
  std::error_code ec;
  std::filesystem::remove_all(workdir, ec);
  write_bench_csv(std::cout, result);
  if (!config.stats_csv.empty()) {
    std::ofstream out(config.stats_csv);
    write_bench_csv(out, result);
    if (!out) throw Error(ErrorCode::io_error, "failed writing " + config.stats_csv.string());
  }
  std::cerr << "fit time ratio (largest/smallest edge): " << result.fit_time_ratio << '\n'
            << "per-pixel transform time ratio (largest/smallest edge): " << result.per_pixel_time_ratio << '\n';
  return kOk;
}

int cmd_demo(const std::filesystem::path& out_dir, const CliConfig& config) {
  std::filesystem::create_directories(out_dir);
  const auto source = out_dir / "demo_source.tif";
  const auto target = out_dir / "demo_target.tif";
  write_synthetic_tiff(source, demo_source_spec());
  write_synthetic_tiff(target, demo_target_spec());
  const FitReport target_fit = fit_image(target, config);
  const FitReport source_fit = fit_image(source, config);
  write_profile(out_dir / "demo_target.profile", target_fit.params);
  write_profile(out_dir / "demo_source.profile", source_fit.params);
  const auto out = out_dir / "demo_normalized.tif";
  normalize_one(source, &source_fit.params, target_fit.params, out, config);
  for (const auto& p : {source, target, out_dir / "demo_source.profile", out_dir / "demo_target.profile", out}) {
    std::cout << p.string() << '\n';
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CliConfig config;
  std::uint64_t seed = 0;
  double white_threshold = config.fit.optics.white_threshold;

  CLI::App app{"Structure-preserving stain color normalization for histology slides of any size", "spcn"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat 'key = value' file using the long flag names");
  app.add_option("--lambda", config.fit.snmf.lambda, "Sparsity weight for basis estimation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--code-lambda", config.fit.code_lambda, "Sparsity weight when coding stain densities")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--white-threshold", white_threshold, "Intensity above which a channel counts as white")
      ->check(CLI::Range(1.0, 254.0))
      ->capture_default_str();
  app.add_option("--sample-cap", config.fit.optics.sample_cap, "White pixels kept for the background estimate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--target-pixels", config.fit.sampling.target_pixels, "Non-white pixels sampled for the fit")
      ->check(CLI::Range(std::size_t{10}, std::size_t{100'000'000}))
      ->capture_default_str();
  app.add_option("--max-patches", config.fit.sampling.max_patches, "Tissue patches visited at most")
      ->check(CLI::Range(1, 100'000))
      ->capture_default_str();
  app.add_option("--patch-size", config.fit.sampling.patch_size, "Edge of square sampling patches")
      ->check(CLI::Range(std::int64_t{16}, std::int64_t{1} << 20))
      ->capture_default_str();
  app.add_option("--max-iters", config.fit.snmf.max_outer_iters, "Outer iterations of the basis solver")
      ->check(CLI::Range(1, 1'000'000))
      ->capture_default_str();
  app.add_option("--rel-tol", config.fit.snmf.rel_tol, "Relative objective change that stops the solver")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--strip-height", config.strip_height, "Rows per streamed strip")
      ->check(CLI::Range(std::int64_t{1}, std::int64_t{1} << 30))
      ->capture_default_str();
  app.add_option("--seed", seed, "Seed for patch sampling and solver initialization")->capture_default_str();
  auto* workers_opt = app.add_option("--workers", config.workers, "Worker threads (0 = all cores; env SPCN_WORKERS)")
                          ->check(CLI::Range(0, 1024))
                          ->capture_default_str();
  app.add_flag("--patch-stats", config.fit.patch_stats, "Median of per-patch 99th percentiles for stain stats");
  app.add_option("--stats-csv", config.stats_csv, "Write run timings as CSV");
  app.add_flag("-v,--verbose", config.verbose, "Print per-stage progress to stderr");

  std::filesystem::path input, profile_out;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a stain profile for one image");
  fit_cmd->add_option("input", input, "Input image")->required();
  fit_cmd->add_option("-o,--out,--profile", profile_out, "Profile file to write")->required();

  std::filesystem::path source, target, source_profile, out;
  auto* norm_cmd = app.add_subcommand("normalize", "Normalize one image to a target image or profile");
  norm_cmd->add_option("source", source, "Image to normalize")->required();
  norm_cmd->add_option("-t,--target", target, "Target image or profile")->required();
  norm_cmd->add_option("-o,--out", out, "Output image (.tif or .png)")->required();
  norm_cmd->add_option("-p,--profile", source_profile, "Reuse a saved profile for the source");

  std::filesystem::path source_dir, out_dir;
  auto* batch_cmd = app.add_subcommand("batch", "Normalize every image in a directory to one target");
  batch_cmd->add_option("source_dir", source_dir, "Directory of input images")->required();
  batch_cmd->add_option("-t,--target", target, "Target image or profile")->required();
  batch_cmd->add_option("-o,--out", out_dir, "Output directory")->required();

  std::string sizes;
  auto* bench_cmd = app.add_subcommand("bench", "Time fit and transform on synthetic slides");
  bench_cmd->add_option("sizes", sizes, "Comma-separated square edges, e.g. 512,1024,2048")->required();

  std::filesystem::path demo_dir;
  auto* demo_cmd = app.add_subcommand("demo", "Generate the demo images and normalize one to the other");
  demo_cmd->add_option("out_dir", demo_dir, "Directory for demo files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  // CLI11 ignores environment values that fail validation, so read it here.
  if (workers_opt->count() == 0) {
    if (const char* env = std::getenv("SPCN_WORKERS"); env && *env) {
      const std::string text(env);
      int value = -1;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
      if (ec != std::errc{} || ptr != text.data() + text.size() || value < 0 || value > 1024) {
        std::cerr << "spcn: SPCN_WORKERS must be an integer in [0, 1024], got '" << text << "'\n";
        return kBadInput;
      }
      config.workers = value;
    }
  }

  config.fit.sampling.seed = seed;
  config.fit.snmf.seed = seed;
  config.fit.optics.white_threshold = white_threshold;

  if (config.verbose) {
    set_message_sink([](Severity severity, std::string_view message) {
      if (severity == Severity::warning) {
        std::cerr << "warning: " << message << '\n';
      } else if (severity == Severity::info) {
        std::cerr << "[spcn] " << message << '\n';
      }
    });
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(input, profile_out, config);
    if (norm_cmd->parsed()) return cmd_normalize(source, target, source_profile, out, config);
    if (batch_cmd->parsed()) return cmd_batch(source_dir, target, out_dir, config);
    if (bench_cmd->parsed()) return cmd_bench(sizes, config);
    if (demo_cmd->parsed()) return cmd_demo(demo_dir, config);
  } catch (const Error& e) {
    std::cerr << describe(e) << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "spcn: " << e.what() << '\n';
    return kWriteFailure;
  }
  return kBadInput;
}

}  // namespace spcn::cli
