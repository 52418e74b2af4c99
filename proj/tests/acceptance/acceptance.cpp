// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: spcn_acceptance [criterion numbers...]   (default: all)

#include <sys/resource.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "spcn/bench.hpp"
#include "spcn/diagnostics.hpp"
#include "spcn/error.hpp"
#include "spcn/normalize.hpp"
#include "spcn/optics.hpp"
#include "spcn/percentile.hpp"
#include "spcn/pipeline.hpp"
#include "spcn/synthetic.hpp"
#include "temp_dir.hpp"

using namespace spcn;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

int max_deviation(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) return 256;
  int worst = 0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(int(a[k]) - int(b[k])));
  return worst;
}

std::vector<std::uint8_t> transform_to_buffer(const SlideSource& slide, const FitParams& src, const FitParams& dst,
                                              std::int64_t strip_height, int workers) {
  BufferSink sink(slide.width(), slide.height());
  transform(slide, src, dst, sink, TransformConfig{.strip_height = strip_height, .workers = workers});
  return sink.pixels();
}

std::vector<std::uint8_t> slide_pixels(const SlideSource& slide) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(slide.width() * slide.height() * 3));
  for (const auto& strip : plan_strips(slide.height(), 512).strips) {
    const auto block = slide.read_region(0, strip.origin_y, slide.width(), strip.height);
    out.insert(out.end(), block.data.begin(), block.data.end());
  }
  return out;
}

// 1. Beer-Lambert round trip.
Outcome beer_lambert_round_trip() {
  const auto start = Clock::now();
  Outcome o;
  int checked = 0, mismatches = 0;
  for (const MaxIntensity i0 : {MaxIntensity{{255, 255, 255}}, MaxIntensity{{240, 240, 240}},
                                MaxIntensity{{250, 245, 230}}}) {
    PixelBlock block(0, 0, 255, 1);
    for (int level = 1; level <= 255; ++level) {
      for (int c = 0; c < 3; ++c) block.data[(level - 1) * 3 + c] = static_cast<std::uint8_t>(level);
    }
    const auto back = inverse_beer_lambert(beer_lambert(block, i0), i0);
    for (int level = 1; level <= 255; ++level) {
      for (int c = 0; c < 3; ++c) {
        // Levels above the background saturate at i0 by construction.
        const int expected = std::min<int>(level, static_cast<int>(i0.rgb[c]));
        ++checked;
        mismatches += back.data[(level - 1) * 3 + c] != expected;
      }
    }
  }
  const double secs = since(start);
  o.pass = mismatches == 0 && secs < 1.0;
  o.detail = std::to_string(checked) + " samples, " + std::to_string(mismatches) + " mismatches, " + fmt(secs) + " s";
  return o;
}

// 2 and 3 share the solver runs.
struct SnmfRuns {
  double worst_noiseless = 0, worst_noisy = 0;
  double worst_ascent = -INFINITY;
  int observed_iterations = 0;
  double seconds = 0;
  bool ran = false;
};

SnmfRuns& snmf_runs() {
  static SnmfRuns runs;
  if (runs.ran) return runs;
  const auto start = Clock::now();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const double noise : {0.0, 0.01}) {
      const auto data = oracle::make_nmf_data(1000 + seed, 10'000, noise);
      double previous = INFINITY;
      const auto fit = fit_basis_detailed(data.od, SnmfConfig{.seed = seed}, [&](int, const StainBasis&, double obj) {
        runs.worst_ascent = std::max(runs.worst_ascent, obj - previous);
        previous = obj;
        ++runs.observed_iterations;
      });
      for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
        runs.worst_ascent = std::max(runs.worst_ascent, fit.objective_trace[k] - fit.objective_trace[k - 1]);
      }
      double worst = 0;
      for (int s = 0; s < 2; ++s) worst = std::max(worst, oracle::angle_deg(fit.basis.column(s), data.truth.column(s)));
      double& slot = noise > 0 ? runs.worst_noisy : runs.worst_noiseless;
      slot = std::max(slot, worst);
    }
  }
  runs.seconds = since(start);
  runs.ran = true;
  return runs;
}

Outcome snmf_recovery() {
  const auto& r = snmf_runs();
  Outcome o;
  o.pass = r.worst_noiseless <= 5.0 && r.worst_noisy <= 10.0 && r.seconds < 30.0;
  o.detail = "20 datasets x {noiseless, 1% noise}: worst angle " + fmt(r.worst_noiseless) + " deg / " +
             fmt(r.worst_noisy) + " deg, " + fmt(r.seconds) + " s for 40 fits";
  return o;
}

Outcome objective_descent() {
  const auto& r = snmf_runs();
  Outcome o;
  o.pass = r.worst_ascent <= 1e-10 && r.observed_iterations > 0;
  o.detail = std::to_string(r.observed_iterations) + " outer iterations, largest increase " + fmt(r.worst_ascent, 3);
  return o;
}

// 4. Coder vs brute-force active-set oracle.
Outcome coder_oracle() {
  Rng rng(4);
  double worst = 0;
  int negatives = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    StainBasis w;
    for (int s = 0; s < 2; ++s) w.set_column(s, unit({rng.uniform(), rng.uniform(), rng.uniform()}));
    const double lambda = rng.uniform(0, 0.5);
    ODBlock od(1, 1);
    for (auto& x : od.data) x = rng.uniform(0, 3);
    const auto coded = code_densities(od, w, lambda);
    const std::array<double, 2> h{coded(0, 0), coded(1, 0)};
    negatives += h[0] < 0 || h[1] < 0;
    const auto ref = oracle::nn_lasso(od.data.data(), w, lambda);
    worst = std::max(worst, std::abs(oracle::lasso_objective(od.data.data(), w, lambda, h) -
                                     oracle::lasso_objective(od.data.data(), w, lambda, ref)));
  }
  Outcome o;
  o.pass = worst <= 1e-6 && negatives == 0;
  o.detail = "1000 triples, worst objective gap " + fmt(worst, 3);
  return o;
}

// 5. Self-normalization on a 2048x2048 rank-2 slide.
Outcome self_normalization() {
  SyntheticSlideSpec spec;
  spec.width = 2048;
  spec.height = 2048;
  spec.seed = 5;
  const SyntheticSlide slide(spec);
  const auto params = fit(slide, FitConfig{});
  const int worst = max_deviation(transform_to_buffer(slide, params, params, kDefaultStripHeight, 0),
                                  slide_pixels(slide));
  Outcome o;
  o.pass = worst <= 1;
  o.detail = "max channel deviation " + std::to_string(worst);
  return o;
}

// 6. Strip invariance.
Outcome strip_invariance() {
  SyntheticSlideSpec src_spec;
  src_spec.width = 1200;
  src_spec.height = 1100;
  src_spec.seed = 6;
  src_spec.cross_stain = 0.2;
  src_spec.i0 = MaxIntensity{{248, 240, 236}};
  src_spec.basis = StainBasis::from_columns(unit({0.55, 0.78, 0.30}), unit({0.15, 0.95, 0.25}));
  SyntheticSlideSpec dst_spec;
  dst_spec.seed = 66;
  dst_spec.width = dst_spec.height = 800;
  const SyntheticSlide source(src_spec);
  const auto src = fit(source, FitConfig{});
  const auto dst = fit(SyntheticSlide(dst_spec), FitConfig{});
  const auto full = transform_to_buffer(source, src, dst, source.height(), 1);
  bool same = true;
  std::string runs;
  for (const std::int64_t strip : {64, 500}) {
    for (const int workers : {1, 2}) {
      same &= transform_to_buffer(source, src, dst, strip, workers) == full;
    }
  }
  Outcome o;
  o.pass = same;
  o.detail = "strip heights {64, 500, " + std::to_string(source.height()) + "} x workers {1, 2}: " +
             (same ? "bit-identical" : "outputs differ");
  return o;
}

// 7. Stain-order heuristic on perturbed reference vectors.
Vec3 perturb(const Vec3& v, Rng& rng) {
  const Vec3 u = unit(v);
  for (;;) {
    Vec3 r{rng.normal(), rng.normal(), rng.normal()};
    const double d = r[0] * u[0] + r[1] * u[1] + r[2] * u[2];
    for (int i = 0; i < 3; ++i) r[i] -= d * u[i];
    r = unit(r);
    const double a = rng.uniform(0, 10) * M_PI / 180.0;
    Vec3 out;
    bool ok = true;
    for (int i = 0; i < 3; ++i) {
      out[i] = std::cos(a) * u[i] + std::sin(a) * r[i];
      ok &= out[i] >= 0;
    }
    if (ok && oracle::angle_deg(out, u) <= 10.0) return unit(out);
  }
}

Outcome stain_order() {
  Rng rng(7);
  int bad_order = 0, not_invariant = 0, not_h_first = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 h = perturb(kReferenceHematoxylin, rng);
    const Vec3 e = perturb(kReferenceEosin, rng);
    const auto a = order_stains(StainBasis::from_columns(h, e));
    const auto b = order_stains(StainBasis::from_columns(e, h));
    const Vec3 c0 = a.basis.column(0), c1 = a.basis.column(1);
    bad_order += !(c0[0] - c0[2] >= c1[0] - c1[2]);
    not_invariant += !(a.basis == b.basis) || !(order_stains(a.basis).basis == a.basis);
    not_h_first += !(c0 == h);
  }
  Outcome o;
  o.pass = bad_order == 0 && not_invariant == 0 && not_h_first == 0;
  o.detail = "100 bases: " + std::to_string(bad_order) + " misordered, " + std::to_string(not_invariant) +
             " permutation-sensitive, " + std::to_string(not_h_first) + " with eosin first";
  return o;
}

// 8. Tinted background maps to a flat white target background.
Outcome background_fidelity() {
  SyntheticSlideSpec src_spec;
  src_spec.width = 1024;
  src_spec.height = 768;
  src_spec.seed = 8;
  src_spec.i0 = MaxIntensity{{250, 243, 230}};
  SyntheticSlideSpec dst_spec;
  dst_spec.width = dst_spec.height = 768;
  dst_spec.seed = 88;
  const SyntheticSlide source(src_spec);
  const auto src = fit(source, FitConfig{});
  const auto dst = fit(SyntheticSlide(dst_spec), FitConfig{});
  const auto out = transform_to_buffer(source, src, dst, kDefaultStripHeight, 0);
  std::int64_t background = 0;
  int worst = 0;
  for (std::int64_t y = 0; y < source.height(); ++y) {
    for (std::int64_t x = 0; x < source.width(); ++x) {
      const auto h = source.density_at(x, y);
      if (h[0] != 0.0 || h[1] != 0.0) continue;
      ++background;
      const auto* p = out.data() + (y * source.width() + x) * 3;
      for (int c = 0; c < 3; ++c) worst = std::max(worst, 255 - int(p[c]));
    }
  }
  Outcome o;
  o.pass = background > 0 && worst <= 1;
  o.detail = "fitted source i0 (" + fmt(src.i0.rgb[0]) + ", " + fmt(src.i0.rgb[1]) + ", " + fmt(src.i0.rgb[2]) +
             "), " + std::to_string(background) + " background pixels, max distance from 255: " +
             std::to_string(worst);
  return o;
}

// 9. Percentile and median oracles.
Outcome percentile_oracles() {
  Rng rng(9);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    BrightSamples bright;
    for (auto& ch : bright.channels) {
      ch.resize(1 + rng.below(1000));
      for (auto& x : ch) x = static_cast<double>(221 + rng.below(35));
    }
    const auto i0 = estimate_max_intensity(bright);
    for (int c = 0; c < 3; ++c) mismatches += i0.rgb[c] != oracle::percentile(bright.channels[c], 0.8);

    DensitySamples pooled;
    PatchPercentiles patches;
    for (int k = 0; k < 2; ++k) {
      pooled.stains[k].resize(1 + rng.below(1000));
      for (auto& x : pooled.stains[k]) x = rng.uniform(0, 3);
      patches.stains[k].resize(1 + rng.below(60));
      for (auto& x : patches.stains[k]) x = rng.uniform(0, 3);
    }
    const auto direct = stain_stats(pooled);
    const auto median_mode = stain_stats(patches, 1);
    for (int k = 0; k < 2; ++k) {
      mismatches += direct.p99[k] != oracle::percentile(pooled.stains[k], 0.99);
      mismatches += median_mode.p99[k] != oracle::median(patches.stains[k]);
    }
  }

  // 50 patches of i.i.d. gamma-like draws (sum of two exponentials).
  std::vector<double> densities;
  std::vector<std::uint32_t> ids;
  std::array<std::vector<double>, 2> pools;
  for (std::uint32_t patch = 0; patch < 50; ++patch) {
    for (int i = 0; i < 2000; ++i) {
      for (int k = 0; k < 2; ++k) {
        const double v = -0.3 * std::log(1.0 - rng.uniform()) - 0.2 * std::log(1.0 - rng.uniform());
        densities.push_back(v);
        pools[k].push_back(v);
      }
      ids.push_back(patch);
    }
  }
  const auto aggregate = stain_stats(patch_percentiles(densities, ids), ids.size());
  double worst_rel = 0;
  for (int k = 0; k < 2; ++k) {
    const double exact = oracle::percentile(pools[k], 0.99);
    worst_rel = std::max(worst_rel, std::abs(aggregate.p99[k] - exact) / exact);
  }
  Outcome o;
  o.pass = mismatches == 0 && worst_rel <= 0.10;
  o.detail = "200 samples: " + std::to_string(mismatches) + " oracle mismatches; median-of-patch p99 relative error " +
             fmt(100 * worst_rel) + "%";
  return o;
}

// 10. Scaling trends.
Outcome scaling_trends() {
  TempDir dir;
  const std::vector<std::int64_t> edges{512, 1024, 2048, 4096};
  const auto start = Clock::now();
  const auto result = run_bench(edges, FitConfig{}, TransformConfig{}, dir.path());
  const double secs = since(start);
  const double basis_ratio = result.seconds(4096, "basis_fit") / result.seconds(512, "basis_fit");
  Outcome o;
  o.pass = result.fit_time_ratio <= 4.0 && result.per_pixel_time_ratio >= 0.5 && result.per_pixel_time_ratio <= 2.0 &&
           secs < 600.0;
  o.detail = "fit time ratio 4096/512 = " + fmt(result.fit_time_ratio) + " (basis_fit stage " + fmt(basis_ratio) +
             "), per-pixel transform ratio = " + fmt(result.per_pixel_time_ratio) + ", bench " + fmt(secs) + " s";
  return o;
}

// 11. Memory bound on a 16384x16384 tiled TIFF.
Outcome memory_bound() {
  TempDir dir;
  SyntheticSlideSpec spec;
  spec.width = spec.height = 16384;
  spec.seed = 11;
  const auto input = dir / "big.tif";
  const auto t0 = Clock::now();
  write_synthetic_tiff(input, spec, TiffWriteOptions{.tile_size = 256, .compression = TiffCompression::none});
  const double write_secs = since(t0);
  const auto slide = open_slide(input);
  const auto params = fit(*slide, FitConfig{});

  Outcome o;
  std::string runs;
  for (const int workers : {1, 2}) {
    auto& stats = PixelBufferStats::instance();
    const auto base = stats.live();
    stats.reset_peak();
    const auto t1 = Clock::now();
    {
      auto sink = open_tiff_sink(dir / "out.tif", spec.width, spec.height,
                                 TiffWriteOptions{.tile_size = 256, .compression = TiffCompression::none});
      transform(*slide, params, params, *sink, TransformConfig{.strip_height = 1024, .workers = workers});
    }
    const std::int64_t peak = stats.peak() - base;
    const std::int64_t bound = std::int64_t{workers} * 1024 * 16384;
    o.pass &= peak <= bound;
    runs += (runs.empty() ? "" : "; ") + std::string("workers ") + std::to_string(workers) + ": peak " +
            std::to_string(peak) + " px <= " + std::to_string(bound) + " (" + fmt(since(t1)) + " s)";
    std::filesystem::remove(dir / "out.tif");
  }
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  o.detail = runs + "; input written in " + fmt(write_secs) + " s; process max RSS " +
             fmt(static_cast<double>(usage.ru_maxrss) / 1024.0, 4) + " MiB";
  return o;
}

// 12. CLI exit codes through the real binary.
int run_binary(const std::string& args) {
  const std::string cmd = std::string(SPCN_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome cli_contract() {
  TempDir dir;
  auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
  SyntheticSlideSpec good;
  good.width = 400;
  good.height = 300;
  good.seed = 12;
  write_synthetic_tiff(dir / "good.tif", good);
  SyntheticSlideSpec blank = good;
  blank.layout = SyntheticSlideSpec::Layout::blank;
  write_synthetic_tiff(dir / "blank.tif", blank);
  SyntheticSlideSpec mono = good;
  mono.basis = StainBasis::from_columns(unit(kReferenceEosin), unit(kReferenceEosin));
  write_synthetic_tiff(dir / "mono.tif", mono);
  std::ofstream(dir / "junk.tif") << "not an image";
  std::filesystem::create_directories(dir / "batch");
  std::filesystem::create_directories(dir / "empty");
  for (const std::string name : {"a.tif", "c.tif"}) {
    good.seed += 1;
    write_synthetic_tiff(dir / ("batch/" + name), good);
  }
  write_synthetic_tiff(dir / "batch/b.tif", blank);

  struct Case {
    std::string name;
    std::string args;
    int expected;
  };
  const std::vector<Case> cases{
      {"fit ok", "fit " + q(dir / "good.tif") + " --out " + q(dir / "good.profile"), 0},
      {"normalize ok", "normalize " + q(dir / "good.tif") + " --target " + q(dir / "good.profile") + " --out " +
                           q(dir / "out.tif"), 0},
      {"bad flag", "fit " + q(dir / "good.tif") + " --out x --lambda=-2", 2},
      {"unsupported", "fit " + q(dir / "junk.tif") + " --out " + q(dir / "x.profile"), 2},
      {"missing target", "normalize " + q(dir / "good.tif") + " --target " + q(dir / "nope.tif") + " --out " +
                             q(dir / "o.tif"), 2},
      {"empty batch", "batch " + q(dir / "empty") + " --target " + q(dir / "good.profile") + " --out " +
                          q(dir / "bo"), 2},
      {"blank slide", "fit " + q(dir / "blank.tif") + " --out " + q(dir / "x.profile"), 3},
      {"single stain", "fit " + q(dir / "mono.tif") + " --out " + q(dir / "x.profile"), 4},
      {"write failure", "normalize " + q(dir / "good.tif") + " --target " + q(dir / "good.profile") +
                            " --out /nonexistent-dir/o.tif", 5},
      {"poisoned batch", "batch " + q(dir / "batch") + " --target " + q(dir / "good.profile") + " --out " +
                             q(dir / "batch_out"), 1},
  };
  Outcome o;
  std::string failures;
  for (const auto& c : cases) {
    const int code = run_binary(c.args);
    if (code != c.expected) {
      o.pass = false;
      failures += " " + c.name + "=" + std::to_string(code) + "(want " + std::to_string(c.expected) + ")";
    }
  }
  const bool batch_outputs = std::filesystem::exists(dir / "batch_out/a.tif") &&
                             std::filesystem::exists(dir / "batch_out/c.tif") &&
                             !std::filesystem::exists(dir / "batch_out/b.tif");
  o.pass &= batch_outputs;
  o.detail = std::to_string(cases.size()) + " fixtures, exit codes 0-5 exercised" +
             (failures.empty() ? "" : "; wrong:" + failures) +
             (batch_outputs ? "; batch kept both valid outputs" : "; batch outputs missing");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  set_message_sink([](Severity, std::string_view) {});
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"Beer-Lambert round trip", beer_lambert_round_trip},
      {"SNMF basis recovery", snmf_recovery},
      {"SNMF objective descent", objective_descent},
      {"sparse coder matches active-set oracle", coder_oracle},
      {"self-normalization on 2048x2048", self_normalization},
      {"strip invariance", strip_invariance},
      {"stain-order heuristic", stain_order},
      {"background fidelity", background_fidelity},
      {"percentile and median oracles", percentile_oracles},
      {"scaling trends", scaling_trends},
      {"memory bound at 16384x16384", memory_bound},
      {"CLI exit-code contract", cli_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(),
                o.detail.c_str(), since(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
