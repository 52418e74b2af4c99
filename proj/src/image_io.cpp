#include "spcn/image_io.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <string>

#include "spcn/error.hpp"
#include "image_codecs.hpp"

namespace spcn {

PixelBlock SlideSource::read_region(std::int64_t x, std::int64_t y, std::int64_t w,
                                    std::int64_t h) const {
  if (w < 1 || h < 1 || x < 0 || y < 0 || x + w > width() || y + h > height()) {
    throw Error(ErrorCode::out_of_bounds,
                "region (" + std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(w) +
                    "," + std::to_string(h) + ") outside " + std::to_string(width()) + "x" +
                    std::to_string(height()) + " slide");
  }
  PixelBlock block(x, y, w, h);
  read_into(x, y, w, h, std::span<std::uint8_t>(block.data.data(), block.data.size()));
  return block;
}

BufferSource::BufferSource(std::int64_t width, std::int64_t height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), rgb_(std::move(rgb)) {
  if (width < 1 || height < 1 || rgb_.size() != static_cast<std::size_t>(width * height * 3)) {
    throw Error(ErrorCode::invalid_argument, "buffer size does not match dimensions");
  }
}

void BufferSource::read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                             std::span<std::uint8_t> out) const {
  for (std::int64_t row = 0; row < h; ++row) {
    const auto* src = rgb_.data() + ((y + row) * width_ + x) * 3;
    std::memcpy(out.data() + row * w * 3, src, static_cast<std::size_t>(w * 3));
  }
}

StripPlan plan_strips(std::int64_t height, std::int64_t strip_height) {
  if (height < 1 || strip_height < 1) {
    throw Error(ErrorCode::invalid_argument, "plan_strips needs height >= 1 and strip_height >= 1");
  }
  StripPlan plan;
  plan.strip_height = strip_height;
  plan.strips.reserve(static_cast<std::size_t>((height + strip_height - 1) / strip_height));
  for (std::int64_t y = 0; y < height; y += strip_height) {
    plan.strips.push_back({y, std::min(strip_height, height - y)});
  }
  return plan;
}

void ImageSink::write_strip(const PixelBlock& block) {
  if (finished_) throw Error(ErrorCode::out_of_order, "write_strip after finish");
  if (block.origin_x != 0 || block.width != width_) {
    throw Error(ErrorCode::out_of_order, "strip must span the full image width");
  }
  if (block.origin_y != next_row_) {
    throw Error(ErrorCode::out_of_order, "strip at row " + std::to_string(block.origin_y) +
                                             " presented, expected row " + std::to_string(next_row_));
  }
  if (block.height < 1 || next_row_ + block.height > height_) {
    throw Error(ErrorCode::out_of_order, "strip runs past the bottom of the image");
  }
  consume(block);
  next_row_ += block.height;
}

void ImageSink::finish() {
  if (finished_) return;
  if (next_row_ != height_) {
    throw Error(ErrorCode::io_error, "image incomplete: " + std::to_string(next_row_) + " of " +
                                         std::to_string(height_) + " rows written");
  }
  close();
  finished_ = true;
}

void BufferSink::consume(const PixelBlock& block) {
  rgb_.insert(rgb_.end(), block.data.begin(), block.data.end());
}

namespace {

enum class Container { png, tiff, unknown };

Container sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::unsupported_format, "cannot open " + path.string());
  }
  std::array<unsigned char, 8> magic{};
  in.read(reinterpret_cast<char*>(magic.data()), magic.size());
  const auto got = in.gcount();
  static constexpr std::array<unsigned char, 8> kPng{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && magic == kPng) return Container::png;
  if (got >= 4) {
    const bool le = magic[0] == 'I' && magic[1] == 'I' && (magic[2] == 42 || magic[2] == 43) && magic[3] == 0;
    const bool be = magic[0] == 'M' && magic[1] == 'M' && magic[2] == 0 && (magic[3] == 42 || magic[3] == 43);
    if (le || be) return Container::tiff;
  }
  return Container::unknown;
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

std::unique_ptr<SlideSource> open_slide(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::unsupported_format, "no such file: " + path.string());
  }
  switch (sniff(path)) {
    case Container::png:
      return detail::open_png_source(path);
    case Container::tiff:
      return detail::open_tiff_source(path);
    case Container::unknown:
      break;
  }
  throw Error(ErrorCode::unsupported_format, "unsupported image format: " + path.string());
}

bool is_supported_image_extension(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".btf" || ext == ".svs";
}

std::unique_ptr<ImageSink> open_sink(const std::filesystem::path& path, std::int64_t width,
                                     std::int64_t height) {
  const auto ext = lower_extension(path);
  if (ext == ".png") return open_png_sink(path, width, height);
  if (ext == ".tif" || ext == ".tiff" || ext == ".btf") return open_tiff_sink(path, width, height);
  throw Error(ErrorCode::unsupported_format, "cannot write '" + ext + "' images: " + path.string());
}

void copy_slide(const SlideSource& source, ImageSink& sink, std::int64_t strip_height) {
  for (const auto& strip : plan_strips(source.height(), strip_height).strips) {
    sink.write_strip(source.read_region(0, strip.origin_y, source.width(), strip.height));
  }
  sink.finish();
}

}  // namespace spcn
