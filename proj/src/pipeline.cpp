#include "spcn/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <charconv>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "spcn/diagnostics.hpp"
#include "spcn/error.hpp"
#include "spcn/random.hpp"

namespace spcn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class F>
auto staged(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    throw e.with_stage(stage);
  }
}

std::string real_text(double value) {
  char buffer[64];
  const auto r = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::general, 17);
  return std::string(buffer, r.ptr);
}

}  // namespace

void validate(const SamplePlan& plan) {
  if (plan.max_patches < 1) throw Error(ErrorCode::invalid_argument, "max_patches must be >= 1");
  if (plan.patch_size < 1) throw Error(ErrorCode::invalid_argument, "patch_size must be >= 1");
  if (plan.target_pixels < 1) throw Error(ErrorCode::invalid_argument, "target_pixels must be >= 1");
  if (!(plan.background_fraction_cutoff > 0.0 && plan.background_fraction_cutoff <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "background cutoff must lie in (0, 1]");
  }
}

PixelSample sample_pixels(const SlideSource& slide, const SamplePlan& plan, const OpticsConfig& optics) {
  validate(plan);
  const std::int64_t pw = std::min(plan.patch_size, slide.width());
  const std::int64_t ph = std::min(plan.patch_size, slide.height());

  std::vector<PatchRect> candidates;
  for (std::int64_t y = 0; y < slide.height(); y += ph) {
    for (std::int64_t x = 0; x < slide.width(); x += pw) {
      candidates.push_back({std::min(x, slide.width() - pw), std::min(y, slide.height() - ph), pw, ph});
    }
  }
  Rng rng(plan.seed);
  rng.shuffle(candidates.begin(), candidates.end());

  const int visit_limit = 10 * plan.max_patches;
  const double threshold = optics.white_threshold;
  PixelSample sample;
  for (const auto& rect : candidates) {
    if (sample.patches_visited >= visit_limit || static_cast<int>(sample.patches.size()) >= plan.max_patches ||
        sample.size() >= plan.target_pixels) {
      break;
    }
    const PixelBlock block = slide.read_region(rect.x, rect.y, rect.width, rect.height);
    ++sample.patches_visited;

    std::int64_t non_white = 0;
    const std::int64_t n = block.pixel_count();
    for (std::int64_t i = 0; i < n; ++i) {
      const std::uint8_t* p = block.data.data() + i * 3;
      if (!is_white(p, threshold)) {
        ++non_white;
        continue;
      }
      for (int c = 0; c < 3; ++c) {
        auto& pool = sample.bright.channels[c];
        if (pool.size() < optics.sample_cap) pool.push_back(p[c]);
      }
    }
    const double non_white_fraction = static_cast<double>(non_white) / static_cast<double>(n);
    if (non_white == 0 || non_white_fraction < 1.0 - plan.background_fraction_cutoff) continue;

    const auto patch_id = static_cast<std::uint32_t>(sample.patches.size());
    sample.patches.push_back(rect);
    sample.rgb.reserve(sample.rgb.size() + static_cast<std::size_t>(non_white) * 3);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::uint8_t* p = block.data.data() + i * 3;
      if (is_white(p, threshold)) continue;
      sample.rgb.insert(sample.rgb.end(), p, p + 3);
      sample.patch_ids.push_back(patch_id);
    }
  }

  if (sample.size() == 0) {
    throw Error(ErrorCode::blank_slide, "blank slide: no non-white pixels found in " +
                                            std::to_string(sample.patches_visited) + " visited patches");
  }
  if (sample.size() > plan.target_pixels) {
    // Seeded partial Fisher-Yates keeps a uniform subset of the collected pixels.
    const std::size_t total = sample.size();
    for (std::size_t i = 0; i < plan.target_pixels; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
      std::swap(sample.patch_ids[i], sample.patch_ids[j]);
      std::swap_ranges(sample.rgb.begin() + static_cast<std::ptrdiff_t>(i * 3),
                       sample.rgb.begin() + static_cast<std::ptrdiff_t>(i * 3 + 3),
                       sample.rgb.begin() + static_cast<std::ptrdiff_t>(j * 3));
    }
    sample.patch_ids.resize(plan.target_pixels);
    sample.rgb.resize(plan.target_pixels * 3);
    sample.rgb.shrink_to_fit();
    sample.patch_ids.shrink_to_fit();
  }
  return sample;
}

std::string config_hash(const FitConfig& config) {
  std::ostringstream canon;
  canon << "white_threshold=" << real_text(config.optics.white_threshold)
        << ";sample_cap=" << config.optics.sample_cap << ";i0_percentile=" << real_text(config.optics.percentile)
        << ";lambda=" << real_text(config.snmf.lambda) << ";max_outer_iters=" << config.snmf.max_outer_iters
        << ";rel_tol=" << real_text(config.snmf.rel_tol) << ";snmf_seed=" << config.snmf.seed
        << ";max_patches=" << config.sampling.max_patches << ";patch_size=" << config.sampling.patch_size
        << ";target_pixels=" << config.sampling.target_pixels
        << ";background_cutoff=" << real_text(config.sampling.background_fraction_cutoff)
        << ";sample_seed=" << config.sampling.seed << ";code_lambda=" << real_text(config.code_lambda)
        << ";patch_stats=" << (config.patch_stats ? 1 : 0);
  const std::string text = canon.str();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (!EVP_Digest(text.data(), text.size(), digest, &length, EVP_sha256(), nullptr)) {
    throw Error(ErrorCode::invalid_argument, "SHA-256 unavailable");
  }
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    char pair[3];
    std::snprintf(pair, sizeof(pair), "%02x", digest[i]);
    hex += pair;
  }
  return hex;
}

FitReport fit_detailed(const SlideSource& slide, const FitConfig& config, const std::string& source_label) {
  FitReport report;
  auto start = Clock::now();
  const PixelSample sample = staged("sampling", [&] { return sample_pixels(slide, config.sampling, config.optics); });
  const MaxIntensity i0 = staged("max_intensity", [&] {
    return estimate_max_intensity(sample.bright, config.optics, &report.warnings);
  });
  report.sampling_seconds = seconds_since(start);
  report.patches_sampled = static_cast<int>(sample.patches.size());
  report.patches_visited = sample.patches_visited;
  report.pixels_sampled = sample.size();

  start = Clock::now();
  const ODTable table(i0);
  std::vector<double> od(sample.size() * 3);
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = table(static_cast<int>(i % 3), sample.rgb[i]);
  report.basis_fit = staged("basis_fit", [&] { return fit_basis_detailed(od, config.snmf); });
  report.warnings.insert(report.warnings.end(), report.basis_fit.warnings.begin(), report.basis_fit.warnings.end());
  report.basis_seconds = seconds_since(start);
  for (int k = 0; k < 2; ++k) {
    if (report.basis_fit.unused[k]) {
      throw Error(ErrorCode::degenerate_stain, std::string("degenerate stain density: no ") +
                                                   (k == 0 ? "hematoxylin" : "eosin") +
                                                   " found; the slide appears to carry a single stain")
          .with_stage("basis_fit");
    }
  }

  start = Clock::now();
  const StainBasis& basis = report.basis_fit.basis;
  const StainStats stats = staged("stain_stats", [&] {
    const DensityCoder coder(basis, config.code_lambda);
    std::vector<double> densities(sample.size() * 2);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const auto h = coder.code(od.data() + i * 3);
      densities[i * 2] = h[0];
      densities[i * 2 + 1] = h[1];
    }
    StainStats s;
    if (config.patch_stats) {
      s = stain_stats(patch_percentiles(densities, sample.patch_ids), sample.size());
    } else {
      DensitySamples pools;
      for (int k = 0; k < 2; ++k) pools.stains[k].reserve(sample.size());
      for (std::size_t i = 0; i < sample.size(); ++i) {
        pools.stains[0].push_back(densities[i * 2]);
        pools.stains[1].push_back(densities[i * 2 + 1]);
      }
      s = stain_stats(pools);
    }
    for (int k = 0; k < 2; ++k) {
      if (!(s.p99[k] > 0.0)) {
        throw Error(ErrorCode::degenerate_stain, std::string("degenerate stain density: ") +
                                                     (k == 0 ? "hematoxylin" : "eosin") +
                                                     " 99th percentile is zero");
      }
    }
    return s;
  });
  report.stats_seconds = seconds_since(start);

  report.params.i0 = i0;
  report.params.basis = basis;
  report.params.stats = stats;
  report.params.provenance = {source_label, config_hash(config)};
  for (const auto& w : report.warnings) warn(source_label.empty() ? w : source_label + ": " + w);
  return report;
}

FitParams fit(const SlideSource& slide, const FitConfig& config, const std::string& source_label) {
  return fit_detailed(slide, config, source_label).params;
}

int resolve_workers(int requested) {
  if (requested < 0) throw Error(ErrorCode::invalid_argument, "workers must be >= 0");
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

class PixelTransformer {
 public:
  PixelTransformer(const FitParams& source, const FitParams& target, double code_lambda)
      : table_(source.i0),
        coder_(source.basis, code_lambda),
        kernel_(staged("scale_factors", [&] { return scale_factors(source.stats, target.stats); }), target.basis,
                target.i0) {}

  void operator()(PixelBlock& block) const {
    const std::int64_t n = block.pixel_count();
    std::uint8_t* p = block.data.data();
    for (std::int64_t i = 0; i < n; ++i, p += 3) {
      const double od[3] = {table_(0, p[0]), table_(1, p[1]), table_(2, p[2])};
      kernel_.apply(coder_.code(od), p);
    }
  }

 private:
  ODTable table_;
  DensityCoder coder_;
  NormalizationKernel kernel_;
};

}  // namespace

void transform_block_in_place(PixelBlock& block, const FitParams& source, const FitParams& target,
                              double code_lambda) {
  PixelTransformer(source, target, code_lambda)(block);
}

RunStats transform(const SlideSource& slide, const FitParams& source, const FitParams& target, ImageSink& out,
                   const TransformConfig& config) {
  validate(source);
  validate(target);
  if (out.width() != slide.width() || out.height() != slide.height()) {
    throw Error(ErrorCode::invalid_argument, "output dimensions must equal input dimensions");
  }
  const auto total_start = Clock::now();
  const PixelTransformer transformer(source, target, config.code_lambda);
  const StripPlan plan = plan_strips(slide.height(), config.strip_height);
  const std::size_t strip_count = plan.strips.size();
  const int workers = static_cast<int>(std::min<std::size_t>(resolve_workers(config.workers), strip_count));

  RunStats stats;
  stats.workers = workers;
  stats.strips.resize(strip_count);

  std::mutex mutex;
  std::condition_variable turn;
  std::size_t next_claim = 0;
  std::size_t next_commit = 0;
  bool failed = false;
  std::exception_ptr error;

  auto worker = [&] {
    try {
      for (;;) {
        std::size_t index;
        {
          std::lock_guard lock(mutex);
          if (failed || next_claim >= strip_count) return;
          index = next_claim++;
        }
        const Strip& strip = plan.strips[index];
        const auto start = Clock::now();
        PixelBlock block = slide.read_region(0, strip.origin_y, slide.width(), strip.height);
        transformer(block);

        std::unique_lock lock(mutex);
        turn.wait(lock, [&] { return failed || next_commit == index; });
        if (failed) return;
        out.write_strip(block);
        stats.strips[index] = {strip.origin_y, strip.height, block.pixel_count(), seconds_since(start)};
        ++next_commit;
        if (config.progress) config.progress(next_commit, strip_count);
        turn.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mutex);
      if (!failed) {
        failed = true;
        error = std::current_exception();
      }
      turn.notify_all();
    }
  };

  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  out.finish();

  stats.pixels = slide.width() * slide.height();
  stats.transform_seconds = seconds_since(total_start);
  stats.total_seconds = stats.transform_seconds;
  return stats;
}

void write_run_stats_csv(std::ostream& out, const RunStats& stats) {
  out << "stage,seconds,pixels,patches\n";
  const auto row = [&](const std::string& stage, double seconds, std::int64_t pixels, int patches) {
    out << stage << ',' << real_text(seconds) << ',' << pixels << ',' << patches << '\n';
  };
  row("sampling", stats.sampling_seconds, stats.pixels_sampled, stats.patches);
  row("basis_fit", stats.basis_fit_seconds, stats.pixels_sampled, 0);
  row("stain_stats", stats.stats_seconds, stats.pixels_sampled, 0);
  for (std::size_t i = 0; i < stats.strips.size(); ++i) {
    const auto& s = stats.strips[i];
    row("strip_" + std::to_string(i), s.seconds, s.pixels, 0);
  }
  row("transform", stats.transform_seconds, stats.pixels, 0);
  row("total", stats.total_seconds, stats.pixels, stats.patches);
}

}  // namespace spcn
