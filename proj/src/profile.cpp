#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "spcn/error.hpp"
#include "spcn/normalize.hpp"

namespace spcn {
namespace {

constexpr std::string_view kMagic = "spcn-profile";
constexpr int kVersion = 1;

std::string format_real(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::general, 17);
  return std::string(buffer, result.ptr);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_profile(const std::string& why) {
  throw Error(ErrorCode::corrupt_file, "invalid profile: " + why);
}

template <std::size_t N>
std::array<double, N> parse_reals(const std::map<std::string, std::string>& fields, const std::string& key) {
  const auto it = fields.find(key);
  if (it == fields.end()) bad_profile("missing key '" + key + "'");
  std::array<double, N> out{};
  const char* p = it->second.data();
  const char* end = p + it->second.size();
  for (std::size_t i = 0; i < N; ++i) {
    while (p < end && *p == ' ') ++p;
    const auto result = std::from_chars(p, end, out[i]);
    if (result.ec != std::errc{}) bad_profile("key '" + key + "' needs " + std::to_string(N) + " numbers");
    p = result.ptr;
  }
  while (p < end && *p == ' ') ++p;
  if (p != end) bad_profile("trailing data after '" + key + "'");
  return out;
}

}  // namespace

std::string format_profile(const FitParams& params) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "i0 = " << format_real(params.i0.rgb[0]) << ' ' << format_real(params.i0.rgb[1]) << ' '
      << format_real(params.i0.rgb[2]) << '\n';
  out << "basis =";
  for (int c = 0; c < 3; ++c) {
    for (int s = 0; s < 2; ++s) out << ' ' << format_real(params.basis(c, s));
  }
  out << '\n';
  out << "p99 = " << format_real(params.stats.p99[0]) << ' ' << format_real(params.stats.p99[1]) << '\n';
  out << "sample_count = " << params.stats.sample_count << '\n';
  out << "source = " << params.provenance.source << '\n';
  out << "config_hash = " << params.provenance.config_hash << '\n';
  return out.str();
}

FitParams parse_profile(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) bad_profile("empty file");
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    if (!(header >> magic >> version) || magic != kMagic) bad_profile("missing '" + std::string(kMagic) + "' header");
    if (version != kVersion) bad_profile("unsupported version " + std::to_string(version));
  }
  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) bad_profile("line without '=': " + stripped);
    fields[trim(std::string_view(stripped).substr(0, eq))] = trim(std::string_view(stripped).substr(eq + 1));
  }

  FitParams params;
  params.i0.rgb = parse_reals<3>(fields, "i0");
  const auto basis = parse_reals<6>(fields, "basis");
  for (int c = 0; c < 3; ++c) {
    for (int s = 0; s < 2; ++s) params.basis(c, s) = basis[c * 2 + s];
  }
  params.stats.p99 = parse_reals<2>(fields, "p99");
  {
    const auto it = fields.find("sample_count");
    if (it == fields.end()) bad_profile("missing key 'sample_count'");
    const auto& v = it->second;
    const auto result = std::from_chars(v.data(), v.data() + v.size(), params.stats.sample_count);
    if (result.ec != std::errc{} || result.ptr != v.data() + v.size()) bad_profile("bad sample_count");
  }
  if (auto it = fields.find("source"); it != fields.end()) params.provenance.source = it->second;
  if (auto it = fields.find("config_hash"); it != fields.end()) params.provenance.config_hash = it->second;
  try {
    validate(params);
  } catch (const Error& e) {
    bad_profile(e.what());
  }
  return params;
}

void write_profile(const std::filesystem::path& path, const FitParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot create profile " + path.string());
  out << format_profile(params);
  out.flush();
  if (!out) throw Error(ErrorCode::io_error, "failed writing profile " + path.string());
}

FitParams read_profile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unsupported_format, "cannot open profile " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_profile(text.str());
}

bool is_profile_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string head(kMagic.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in.gcount() == static_cast<std::streamsize>(kMagic.size()) && head == kMagic;
}

}  // namespace spcn
