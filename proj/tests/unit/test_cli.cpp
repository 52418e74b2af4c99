#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "spcn/normalize.hpp"
#include "spcn/synthetic.hpp"
#include "temp_dir.hpp"

using namespace spcn;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "spcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = cli::run(static_cast<int>(argv.size()), argv.data());
  Result r{code, testing::internal::GetCapturedStdout(), testing::internal::GetCapturedStderr()};
  return r;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

SyntheticSlideSpec small_spec(std::uint64_t seed) {
  SyntheticSlideSpec spec;
  spec.width = 300;
  spec.height = 240;
  spec.seed = seed;
  return spec;
}

void write_blank(const std::filesystem::path& p) {
  auto spec = small_spec(1);
  spec.layout = SyntheticSlideSpec::Layout::blank;
  write_synthetic_tiff(p, spec);
}

std::vector<std::uint8_t> pixels(const std::filesystem::path& p) {
  const auto slide = open_slide(p);
  const auto b = slide->read_region(0, 0, slide->width(), slide->height());
  return {b.data.begin(), b.data.end()};
}

}  // namespace

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::unsupported_format, "")), 2);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::corrupt_file, "")), 2);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::invalid_argument, "")), 2);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::blank_slide, "")), 3);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::insufficient_pixels, "")), 3);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::degenerate_stain, "")), 4);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::stain_absent, "")), 4);
  EXPECT_EQ(cli::exit_code_for(Error(ErrorCode::io_error, "")), 5);
}

TEST(CliFit, DemoProfileIsDeterministic) {
  TempDir dir;
  write_synthetic_tiff(dir / "demo.tif", demo_source_spec());
  const auto a = run_cli({"fit", (dir / "demo.tif").string(), "--out", (dir / "a.profile").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, (dir / "a.profile").string() + "\n");
  const auto b = run_cli({"fit", (dir / "demo.tif").string(), "--profile", (dir / "b.profile").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto profile = read_profile(dir / "a.profile");
  EXPECT_NO_THROW(validate(profile.basis));
  EXPECT_EQ(read_file(dir / "a.profile"), read_file(dir / "b.profile"));
}

TEST(CliFit, ErrorCodes) {
  TempDir dir;
  write_blank(dir / "blank.tif");
  EXPECT_EQ(run_cli({"fit", (dir / "blank.tif").string(), "-o", (dir / "p").string()}).code, 3);

  std::ofstream(dir / "junk.tif") << "definitely not a tiff";
  EXPECT_EQ(run_cli({"fit", (dir / "junk.tif").string(), "-o", (dir / "p").string()}).code, 2);
  EXPECT_EQ(run_cli({"fit", (dir / "none.tif").string(), "-o", (dir / "p").string()}).code, 2);

  auto mono = small_spec(2);
  mono.basis = StainBasis::from_columns(unit(kReferenceEosin), unit(kReferenceEosin));
  write_synthetic_tiff(dir / "mono.tif", mono);
  const auto r = run_cli({"fit", (dir / "mono.tif").string(), "-o", (dir / "p").string()});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST(CliFit, ProfileWriteFailure) {
  TempDir dir;
  write_synthetic_tiff(dir / "s.tif", small_spec(3));
  EXPECT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", "/nonexistent-dir/x.profile"}).code, 5);
}

TEST(CliArgs, ParseErrorsAndHelp) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"--lambda", "-1", "fit", "x.tif", "-o", "p"}).code, 2);
  EXPECT_EQ(run_cli({"fit", "x.tif"}).code, 2);
  EXPECT_EQ(run_cli({"--strip-height", "0", "normalize", "a.tif", "-t", "b.tif", "-o", "c.tif"}).code, 2);
}

TEST(CliArgs, WorkerEnvironmentVariable) {
  TempDir dir;
  write_synthetic_tiff(dir / "s.tif", small_spec(4));
  ::setenv("SPCN_WORKERS", "-3", 1);
  EXPECT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", (dir / "p").string()}).code, 2);
  EXPECT_EQ(run_cli({"--workers", "1", "fit", (dir / "s.tif").string(), "-o", (dir / "p").string()}).code, 0);
  ::setenv("SPCN_WORKERS", "two", 1);
  EXPECT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", (dir / "p").string()}).code, 2);
  ::setenv("SPCN_WORKERS", "2", 1);
  EXPECT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", (dir / "p").string()}).code, 0);
  ::unsetenv("SPCN_WORKERS");
}

TEST(CliArgs, ConfigFilePrecedence) {
  TempDir dir;
  write_synthetic_tiff(dir / "s.tif", small_spec(5));
  std::ofstream(dir / "cfg.ini") << "lambda = 0.3\nseed = 9\n";
  FitConfig from_file;
  from_file.snmf.lambda = 0.3;
  from_file.snmf.seed = 9;
  from_file.sampling.seed = 9;
  FitConfig overridden = from_file;
  overridden.snmf.lambda = 0.2;

  ASSERT_EQ(run_cli({"--config", (dir / "cfg.ini").string(), "fit", (dir / "s.tif").string(), "-o",
                     (dir / "a").string()}).code, 0);
  EXPECT_EQ(read_profile(dir / "a").provenance.config_hash, config_hash(from_file));
  ASSERT_EQ(run_cli({"--config", (dir / "cfg.ini").string(), "--lambda", "0.2", "fit", (dir / "s.tif").string(),
                     "-o", (dir / "b").string()}).code, 0);
  EXPECT_EQ(read_profile(dir / "b").provenance.config_hash, config_hash(overridden));
  ASSERT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", (dir / "c").string()}).code, 0);
  EXPECT_EQ(read_profile(dir / "c").provenance.config_hash, config_hash(FitConfig{}));
}

TEST(CliNormalize, DemoPairKeepsDimensions) {
  TempDir dir;
  write_synthetic_tiff(dir / "src.tif", demo_source_spec());
  write_synthetic_tiff(dir / "dst.tif", demo_target_spec());
  const auto r = run_cli({"--stats-csv", (dir / "stats.csv").string(), "normalize", (dir / "src.tif").string(),
                          "--target", (dir / "dst.tif").string(), "--out", (dir / "out.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = open_slide(dir / "out.png");
  EXPECT_EQ(out->width(), demo_source_spec().width);
  EXPECT_EQ(out->height(), demo_source_spec().height);
  EXPECT_EQ(read_file(dir / "stats.csv").rfind("stage,seconds,pixels,patches\n", 0), 0u);
}

TEST(CliNormalize, SelfProfileRoundTrip) {
  TempDir dir;
  auto spec = small_spec(6);
  spec.i0 = MaxIntensity{{249, 244, 235}};
  write_synthetic_tiff(dir / "s.tif", spec);
  ASSERT_EQ(run_cli({"fit", (dir / "s.tif").string(), "-o", (dir / "s.profile").string()}).code, 0);
  const auto r = run_cli({"normalize", (dir / "s.tif").string(), "--target", (dir / "s.profile").string(),
                          "--profile", (dir / "s.profile").string(), "--out", (dir / "o.tif").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto in = pixels(dir / "s.tif");
  const auto out = pixels(dir / "o.tif");
  ASSERT_EQ(in.size(), out.size());
  int worst = 0;
  for (std::size_t k = 0; k < in.size(); ++k) worst = std::max(worst, std::abs(int(in[k]) - int(out[k])));
  EXPECT_LE(worst, 1);
}

TEST(CliNormalize, Errors) {
  TempDir dir;
  write_synthetic_tiff(dir / "s.tif", small_spec(7));
  const auto missing = (dir / "no_such_target.tif").string();
  const auto r = run_cli({"normalize", (dir / "s.tif").string(), "--target", missing, "--out",
                          (dir / "o.tif").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "o.tif"));

  EXPECT_EQ(run_cli({"normalize", (dir / "s.tif").string(), "--target", (dir / "s.tif").string(), "--out",
                     (dir / "o.jpg").string()}).code, 2);
  EXPECT_EQ(run_cli({"normalize", (dir / "s.tif").string(), "--target", (dir / "s.tif").string(), "--out",
                     "/nonexistent-dir/o.tif"}).code, 5);
  write_blank(dir / "blank.tif");
  EXPECT_EQ(run_cli({"normalize", (dir / "blank.tif").string(), "--target", (dir / "s.tif").string(), "--out",
                     (dir / "o.tif").string()}).code, 3);
}

TEST(CliBatch, AllValid) {
  TempDir dir;
  std::filesystem::create_directories(dir / "in");
  for (int i = 0; i < 3; ++i) write_synthetic_tiff(dir / ("in/s" + std::to_string(i) + ".tif"), small_spec(10 + i));
  write_synthetic_tiff(dir / "target.tif", demo_target_spec());
  const auto r = run_cli({"batch", (dir / "in").string(), "--target", (dir / "target.tif").string(), "--out",
                          (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(std::filesystem::exists(dir / ("out/s" + std::to_string(i) + ".tif")));
}

TEST(CliBatch, PoisonedInput) {
  TempDir dir;
  std::filesystem::create_directories(dir / "in");
  write_synthetic_tiff(dir / "in/a.tif", small_spec(20));
  write_blank(dir / "in/b_blank.tif");
  write_synthetic_tiff(dir / "in/c.tif", small_spec(21));
  write_synthetic_tiff(dir / "target.tif", demo_target_spec());
  ASSERT_EQ(run_cli({"fit", (dir / "target.tif").string(), "-o", (dir / "target.profile").string()}).code, 0);
  const auto r = run_cli({"batch", (dir / "in").string(), "--target", (dir / "target.profile").string(), "--out",
                          (dir / "out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/a.tif"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out/c.tif"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out/b_blank.tif"));
  EXPECT_NE(r.err.find("b_blank.tif"), std::string::npos);
}

TEST(CliBatch, EmptyOrMissingDirectory) {
  TempDir dir;
  std::filesystem::create_directories(dir / "empty");
  write_synthetic_tiff(dir / "target.tif", small_spec(30));
  EXPECT_EQ(run_cli({"batch", (dir / "empty").string(), "--target", (dir / "target.tif").string(), "--out",
                     (dir / "out").string()}).code, 2);
  EXPECT_EQ(run_cli({"batch", (dir / "nope").string(), "--target", (dir / "target.tif").string(), "--out",
                     (dir / "out").string()}).code, 2);
}

TEST(CliBench, CsvRowsPerStage) {
  const auto r = run_cli({"bench", "64,128"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "edge,stage,seconds,pixels,patches");
  std::map<std::string, int> per_stage;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    ++per_stage[line.substr(a + 1, b - a - 1)];
  }
  ASSERT_FALSE(per_stage.empty());
  for (const auto& [stage, count] : per_stage) EXPECT_EQ(count, 2) << stage;
  EXPECT_NE(r.err.find("ratio"), std::string::npos);
}

TEST(CliBench, InvalidSizes) {
  EXPECT_EQ(run_cli({"bench", "512,abc"}).code, 2);
  EXPECT_EQ(run_cli({"bench", ""}).code, 2);
  EXPECT_EQ(run_cli({"bench", "4"}).code, 2);
}

TEST(CliDemo, WritesFiles) {
  TempDir dir;
  const auto r = run_cli({"demo", (dir / "d").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "d/demo_normalized.tif"));
  EXPECT_TRUE(is_profile_file(dir / "d/demo_source.profile"));
}
