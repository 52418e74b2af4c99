#include <tiffio.h>

#include <algorithm>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <string>

#include "image_codecs.hpp"
#include "spcn/error.hpp"

namespace spcn {
namespace {

thread_local std::string g_tiff_message;

void on_tiff_error(const char* module, const char* fmt, va_list args) {
  char buffer[512];
  std::vsnprintf(buffer, sizeof(buffer), fmt, args);
  g_tiff_message = module ? std::string(module) + ": " + buffer : std::string(buffer);
}

void on_tiff_warning(const char*, const char*, va_list) {}

void install_handlers() {
  static std::once_flag once;
  std::call_once(once, [] {
    TIFFSetErrorHandler(on_tiff_error);
    TIFFSetWarningHandler(on_tiff_warning);
  });
}

std::string take_message() {
  std::string m = std::move(g_tiff_message);
  g_tiff_message.clear();
  return m.empty() ? std::string("libtiff error") : m;
}

struct TiffCloser {
  void operator()(TIFF* tif) const noexcept {
    if (tif) TIFFClose(tif);
  }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

class TiffSource final : public SlideSource {
 public:
  TiffSource(TiffHandle tif, const std::filesystem::path& path) : tif_(std::move(tif)), path_(path) {
    select_level0();
    validate_layout();
  }

  std::int64_t width() const override { return width_; }
  std::int64_t height() const override { return height_; }

 protected:
  void read_into(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                 std::span<std::uint8_t> out) const override {
    std::lock_guard lock(mutex_);
    if (tiled_) {
      read_tiled(x, y, w, h, out);
    } else {
      read_striped(x, y, w, h, out);
    }
  }

 private:
  void select_level0() {
    TIFF* tif = tif_.get();
    tdir_t best = 0;
    std::uint64_t best_area = 0;
    const tdir_t count = TIFFNumberOfDirectories(tif);
    for (tdir_t d = 0; d < count; ++d) {
      if (!TIFFSetDirectory(tif, d)) break;
      std::uint32_t w = 0, h = 0;
      TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
      TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
      const std::uint64_t area = std::uint64_t{w} * h;
      if (area > best_area) {
        best_area = area;
        best = d;
      }
    }
    if (!TIFFSetDirectory(tif, best)) {
      throw Error(ErrorCode::corrupt_file, "cannot read TIFF directory in " + path_.string());
    }
  }

  void validate_layout() {
    TIFF* tif = tif_.get();
    std::uint32_t w = 0, h = 0;
    std::uint16_t bps = 0, spp = 0, planar = PLANARCONFIG_CONTIG, photometric = 0, compression = 0;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bps);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
    TIFFGetFieldDefaulted(tif, TIFFTAG_COMPRESSION, &compression);
    TIFFGetField(tif, TIFFTAG_PHOTOMETRIC, &photometric);
    if (w == 0 || h == 0) throw Error(ErrorCode::corrupt_file, "TIFF has no image data: " + path_.string());
    if (bps != 8 || (spp != 3 && spp != 4) || planar != PLANARCONFIG_CONTIG) {
      throw Error(ErrorCode::unsupported_format,
                  "only contiguous 8-bit RGB/RGBA TIFF is supported: " + path_.string());
    }
    if (photometric == PHOTOMETRIC_YCBCR && compression == COMPRESSION_JPEG) {
      TIFFSetField(tif, TIFFTAG_JPEGCOLORMODE, JPEGCOLORMODE_RGB);
    } else if (photometric != PHOTOMETRIC_RGB) {
      throw Error(ErrorCode::unsupported_format, "TIFF photometric interpretation is not RGB: " + path_.string());
    }
    if (!TIFFIsCODECConfigured(compression)) {
      throw Error(ErrorCode::unsupported_format, "TIFF compression scheme not available: " + path_.string());
    }
    width_ = w;
    height_ = h;
    samples_ = spp;
    tiled_ = TIFFIsTiled(tif) != 0;
    if (tiled_) {
      std::uint32_t tw = 0, th = 0;
      TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
      TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
      if (tw == 0 || th == 0) throw Error(ErrorCode::corrupt_file, "bad TIFF tile geometry: " + path_.string());
      tile_w_ = tw;
      tile_h_ = th;
    } else {
      std::uint32_t rps = 0;
      TIFFGetFieldDefaulted(tif, TIFFTAG_ROWSPERSTRIP, &rps);
      rows_per_strip_ = std::min<std::int64_t>(rps == 0 ? height_ : rps, height_);
    }
    check_extents();
  }

  // Every chunk must lie inside the file; catches truncated downloads at open.
  void check_extents() {
    TIFF* tif = tif_.get();
    std::error_code ec;
    const auto file_size = std::filesystem::file_size(path_, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot stat " + path_.string());
    const auto chunks = tiled_ ? TIFFNumberOfTiles(tif) : TIFFNumberOfStrips(tif);
    const std::uint64_t* offsets = nullptr;
    const std::uint64_t* counts = nullptr;
    const auto offset_tag = tiled_ ? TIFFTAG_TILEOFFSETS : TIFFTAG_STRIPOFFSETS;
    const auto count_tag = tiled_ ? TIFFTAG_TILEBYTECOUNTS : TIFFTAG_STRIPBYTECOUNTS;
    if (!TIFFGetField(tif, offset_tag, &offsets) || !TIFFGetField(tif, count_tag, &counts) || !offsets ||
        !counts) {
      throw Error(ErrorCode::corrupt_file, "TIFF is missing chunk offsets: " + path_.string());
    }
    for (std::uint32_t i = 0; i < chunks; ++i) {
      if (counts[i] == 0 && offsets[i] == 0) continue;  // sparse chunk
      if (offsets[i] + counts[i] > file_size) {
        throw Error(ErrorCode::corrupt_file, "TIFF is truncated: " + path_.string());
      }
    }
  }

  void copy_pixels(const std::uint8_t* src, std::uint8_t* dst, std::int64_t count) const {
    if (samples_ == 3) {
      std::memcpy(dst, src, static_cast<std::size_t>(count * 3));
      return;
    }
    for (std::int64_t i = 0; i < count; ++i) {
      dst[i * 3 + 0] = src[i * samples_ + 0];
      dst[i * 3 + 1] = src[i * samples_ + 1];
      dst[i * 3 + 2] = src[i * samples_ + 2];
    }
  }

  void read_tiled(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                  std::span<std::uint8_t> out) const {
    TIFF* tif = tif_.get();
    const auto tile_bytes = static_cast<std::size_t>(TIFFTileSize(tif));
    scratch_.resize(tile_bytes);
    for (std::int64_t ty = y / tile_h_ * tile_h_; ty < y + h; ty += tile_h_) {
      for (std::int64_t tx = x / tile_w_ * tile_w_; tx < x + w; tx += tile_w_) {
        const auto tile = TIFFComputeTile(tif, static_cast<std::uint32_t>(tx), static_cast<std::uint32_t>(ty), 0, 0);
        if (TIFFReadEncodedTile(tif, tile, scratch_.data(), static_cast<tmsize_t>(tile_bytes)) < 0) {
          throw Error(ErrorCode::corrupt_file, "cannot decode tile of " + path_.string() + ": " + take_message());
        }
        const auto x0 = std::max(x, tx), x1 = std::min(x + w, tx + tile_w_);
        const auto y0 = std::max(y, ty), y1 = std::min(y + h, ty + tile_h_);
        for (std::int64_t row = y0; row < y1; ++row) {
          const auto* src = scratch_.data() + ((row - ty) * tile_w_ + (x0 - tx)) * samples_;
          auto* dst = out.data() + ((row - y) * w + (x0 - x)) * 3;
          copy_pixels(src, dst, x1 - x0);
        }
      }
    }
  }

  void read_striped(std::int64_t x, std::int64_t y, std::int64_t w, std::int64_t h,
                    std::span<std::uint8_t> out) const {
    TIFF* tif = tif_.get();
    const auto strip_bytes = static_cast<std::size_t>(TIFFStripSize(tif));
    scratch_.resize(strip_bytes);
    for (std::int64_t sy = y / rows_per_strip_ * rows_per_strip_; sy < y + h; sy += rows_per_strip_) {
      const auto strip = TIFFComputeStrip(tif, static_cast<std::uint32_t>(sy), 0);
      if (TIFFReadEncodedStrip(tif, strip, scratch_.data(), static_cast<tmsize_t>(strip_bytes)) < 0) {
        throw Error(ErrorCode::corrupt_file, "cannot decode strip of " + path_.string() + ": " + take_message());
      }
      const auto y0 = std::max(y, sy), y1 = std::min(y + h, sy + rows_per_strip_);
      for (std::int64_t row = y0; row < y1; ++row) {
        const auto* src = scratch_.data() + ((row - sy) * width_ + x) * samples_;
        copy_pixels(src, out.data() + (row - y) * w * 3, w);
      }
    }
  }

  TiffHandle tif_;
  std::filesystem::path path_;
  std::int64_t width_ = 0;
  std::int64_t height_ = 0;
  std::int64_t samples_ = 3;
  bool tiled_ = false;
  std::int64_t tile_w_ = 0;
  std::int64_t tile_h_ = 0;
  std::int64_t rows_per_strip_ = 0;
  mutable std::mutex mutex_;
  mutable std::vector<std::uint8_t> scratch_;
};

class TiffSink final : public ImageSink {
 public:
  TiffSink(const std::filesystem::path& path, std::int64_t width, std::int64_t height,
           const TiffWriteOptions& options)
      : ImageSink(width, height), path_(path), tile_(options.tile_size) {
    install_handlers();
    if (width < 1 || height < 1 || width > 0xffffffffLL || height > 0xffffffffLL) {
      throw Error(ErrorCode::invalid_argument, "invalid TIFF dimensions");
    }
    if (tile_ < 16 || tile_ % 16 != 0) {
      throw Error(ErrorCode::invalid_argument, "TIFF tile size must be a positive multiple of 16");
    }
    // Classic TIFF offsets are 32-bit; switch to BigTIFF with headroom.
    const bool big = options.bigtiff || width * height * 3 > (std::int64_t{3} << 30);
    tif_.reset(TIFFOpen(path.c_str(), big ? "w8" : "w"));
    if (!tif_) throw Error(ErrorCode::io_error, "cannot create " + path.string() + ": " + take_message());
    TIFF* tif = tif_.get();
    TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(width));
    TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(height));
    TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 8);
    TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, 3);
    TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_RGB);
    TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(tif, TIFFTAG_TILEWIDTH, static_cast<std::uint32_t>(tile_));
    TIFFSetField(tif, TIFFTAG_TILELENGTH, static_cast<std::uint32_t>(tile_));
    switch (options.compression) {
      case TiffCompression::none:
        TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
        break;
      case TiffCompression::deflate:
        TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_ADOBE_DEFLATE);
        TIFFSetField(tif, TIFFTAG_ZIPQUALITY, 1);
        TIFFSetField(tif, TIFFTAG_PREDICTOR, PREDICTOR_HORIZONTAL);
        break;
      case TiffCompression::lzw:
        TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_LZW);
        TIFFSetField(tif, TIFFTAG_PREDICTOR, PREDICTOR_HORIZONTAL);
        break;
    }
    tile_buffer_.resize(static_cast<std::size_t>(tile_ * tile_ * 3));
  }

  ~TiffSink() override = default;

 protected:
  void consume(const PixelBlock& block) override {
    const std::int64_t stride = width() * 3;
    std::int64_t row = 0;
    while (row < block.height) {
      const std::int64_t needed = std::min(tile_, height() - tile_row_y_);
      const std::int64_t remaining = block.height - row;
      if (carry_rows_ == 0 && remaining >= needed) {
        encode_tile_row(block.data.data() + row * stride, needed);
        row += needed;
        continue;
      }
      if (carry_.empty()) carry_.resize(static_cast<std::size_t>(tile_ * stride));
      const std::int64_t take = std::min(needed - carry_rows_, remaining);
      std::memcpy(carry_.data() + carry_rows_ * stride, block.data.data() + row * stride,
                  static_cast<std::size_t>(take * stride));
      carry_rows_ += take;
      row += take;
      if (carry_rows_ == needed) {
        encode_tile_row(carry_.data(), needed);
        carry_rows_ = 0;
      }
    }
  }

  void close() override {
    TIFF* tif = tif_.release();
    if (!TIFFFlush(tif)) {
      TIFFClose(tif);
      throw Error(ErrorCode::io_error, "cannot finalise " + path_.string() + ": " + take_message());
    }
    TIFFClose(tif);
    PixelStorage().swap(carry_);
  }

 private:
  void encode_tile_row(const std::uint8_t* rows, std::int64_t row_count) {
    TIFF* tif = tif_.get();
    const std::int64_t stride = width() * 3;
    for (std::int64_t tx = 0; tx < width(); tx += tile_) {
      const std::int64_t cols = std::min(tile_, width() - tx);
      if (cols < tile_ || row_count < tile_) std::fill(tile_buffer_.begin(), tile_buffer_.end(), 0);
      for (std::int64_t r = 0; r < row_count; ++r) {
        std::memcpy(tile_buffer_.data() + r * tile_ * 3, rows + r * stride + tx * 3,
                    static_cast<std::size_t>(cols * 3));
      }
      const auto tile = TIFFComputeTile(tif, static_cast<std::uint32_t>(tx),
                                        static_cast<std::uint32_t>(tile_row_y_), 0, 0);
      if (TIFFWriteEncodedTile(tif, tile, tile_buffer_.data(), static_cast<tmsize_t>(tile_buffer_.size())) < 0) {
        throw Error(ErrorCode::io_error, "cannot write tile to " + path_.string() + ": " + take_message());
      }
    }
    tile_row_y_ += row_count;
  }

  TiffHandle tif_;
  std::filesystem::path path_;
  std::int64_t tile_;
  std::int64_t tile_row_y_ = 0;
  std::int64_t carry_rows_ = 0;
  PixelStorage carry_;
  std::vector<std::uint8_t> tile_buffer_;
};

}  // namespace

namespace detail {

std::unique_ptr<SlideSource> open_tiff_source(const std::filesystem::path& path) {
  install_handlers();
  TiffHandle tif(TIFFOpen(path.c_str(), "rm"));  // no mmap: resident memory follows the strip buffers
  if (!tif) {
    throw Error(ErrorCode::corrupt_file, "cannot open TIFF " + path.string() + ": " + take_message());
  }
  return std::make_unique<TiffSource>(std::move(tif), path);
}

}  // namespace detail

std::unique_ptr<ImageSink> open_tiff_sink(const std::filesystem::path& path, std::int64_t width,
                                          std::int64_t height, const TiffWriteOptions& options) {
  return std::make_unique<TiffSink>(path, width, height, options);
}

}  // namespace spcn
