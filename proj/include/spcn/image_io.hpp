#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "spcn/buffer_tracker.hpp"

namespace spcn {

using PixelStorage = std::vector<std::uint8_t, TrackingAllocator<std::uint8_t, 3>>;

// Rectangular tile of interleaved 8-bit RGB samples, row-major, positioned in
// slide coordinates.
struct PixelBlock {
  std::int64_t origin_x = 0;
  std::int64_t origin_y = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
  PixelStorage data;

  PixelBlock() = default;
  PixelBlock(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h)
      : origin_x(x), origin_y(y), width(w), height(h), data(static_cast<std::size_t>(w * h * 3)) {}

  std::int64_t pixel_count() const noexcept { return width * height; }

  std::uint8_t* pixel(std::int64_t x, std::int64_t y) noexcept {
    return data.data() + (y * width + x) * 3;
  }
  const std::uint8_t* pixel(std::int64_t x, std::int64_t y) const noexcept {
    return data.data() + (y * width + x) * 3;
  }
};

// Random-access read interface over a slide. Implementations must tolerate
// concurrent read_region calls from several threads.
class SlideSource {
 public:
  virtual ~SlideSource() = default;

  virtual std::int64_t width() const = 0;
  virtual std::int64_t height() const = 0;

  // Throws Error{out_of_bounds} unless the rectangle lies inside the slide
  // and w, h >= 1.
  PixelBlock read_region(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h) const;

 protected:
  // Fills `out` (w*h*3 bytes, row-major) for an already validated rectangle.
  virtual void read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                         std::span<std::uint8_t> out) const = 0;
};

// Whole image held in memory. Used for PNG inputs and in tests.
class BufferSource final : public SlideSource {
 public:
  BufferSource(std::int64_t width, std::int64_t height, std::vector<std::uint8_t> rgb);

  std::int64_t width() const override { return width_; }
  std::int64_t height() const override { return height_; }
  const std::vector<std::uint8_t>& pixels() const noexcept { return rgb_; }

 protected:
  void read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                 std::span<std::uint8_t> out) const override;

 private:
  std::int64_t width_;
  std::int64_t height_;
  std::vector<std::uint8_t> rgb_;
};

// Opens PNG or (Big)TIFF, tiled or striped, 8-bit RGB/RGBA. For multi-directory
// TIFFs the largest directory (level 0) is exposed.
// Errors: unsupported_format for unknown/unsupported files or a missing path,
// corrupt_file for truncated or undecodable data.
std::unique_ptr<SlideSource> open_slide(const std::filesystem::path& path);

struct Strip {
  std::int64_t origin_y = 0;
  std::int64_t height = 0;

  friend bool operator==(const Strip&, const Strip&) = default;
};

struct StripPlan {
  std::int64_t strip_height = 0;
  std::vector<Strip> strips;
};

inline constexpr std::int64_t kDefaultStripHeight = 1024;

StripPlan plan_strips(std::int64_t height, std::int64_t strip_height);

// Streaming writer: accepts full-width strips in top-to-bottom order.
class ImageSink {
 public:
  ImageSink(std::int64_t width, std::int64_t height) : width_(width), height_(height) {}
  virtual ~ImageSink() = default;

  ImageSink(const ImageSink&) = delete;
  ImageSink& operator=(const ImageSink&) = delete;

  std::int64_t width() const noexcept { return width_; }
  std::int64_t height() const noexcept { return height_; }
  std::int64_t rows_written() const noexcept { return next_row_; }

  // Throws Error{out_of_order} if the block is not the next full-width strip,
  // Error{io_error} on write failure.
  void write_strip(const PixelBlock& block);

  // Flushes and closes. Throws Error{io_error} if rows are missing or the
  // final write fails.
  void finish();

 protected:
  virtual void consume(const PixelBlock& block) = 0;
  virtual void close() = 0;

 private:
  std::int64_t width_;
  std::int64_t height_;
  std::int64_t next_row_ = 0;
  bool finished_ = false;
};

// Collects everything in memory; handy for tests and small images.
class BufferSink final : public ImageSink {
 public:
  using ImageSink::ImageSink;
  const std::vector<std::uint8_t>& pixels() const noexcept { return rgb_; }

 protected:
  void consume(const PixelBlock& block) override;
  void close() override {}

 private:
  std::vector<std::uint8_t> rgb_;
};

enum class TiffCompression { none, deflate, lzw };

struct TiffWriteOptions {
  std::int64_t tile_size = 256;
  TiffCompression compression = TiffCompression::deflate;
  // Force BigTIFF even when the classic 4 GiB offsets would suffice.
  bool bigtiff = false;
};

std::unique_ptr<ImageSink> open_tiff_sink(const std::filesystem::path& path, std::int64_t width,
                                          std::int64_t height, const TiffWriteOptions& options = {});
std::unique_ptr<ImageSink> open_png_sink(const std::filesystem::path& path, std::int64_t width,
                                         std::int64_t height);

// Chooses the encoder from the extension (.tif/.tiff or .png).
std::unique_ptr<ImageSink> open_sink(const std::filesystem::path& path, std::int64_t width,
                                     std::int64_t height);

bool is_supported_image_extension(const std::filesystem::path& path);

// Streams a whole source into a sink strip by strip.
void copy_slide(const SlideSource& source, ImageSink& sink,
                std::int64_t strip_height = kDefaultStripHeight);

}  // namespace spcn
