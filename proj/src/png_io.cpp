#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <string>

#include "image_codecs.hpp"
#include "spcn/error.hpp"

namespace spcn {
namespace detail {

std::unique_ptr<SlideSource> open_png_source(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::corrupt_file, "cannot decode PNG " + path.string() + ": " + message);
  }
  // Alpha is composited away against white; gray and palette expand to RGB.
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, rgb.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::corrupt_file, "cannot decode PNG " + path.string() + ": " + message);
  }
  return std::make_unique<BufferSource>(image.width, image.height, std::move(rgb));
}

}  // namespace detail

namespace {

struct PngErrorState {
  std::jmp_buf jump;
  char message[256] = {};
};

void on_png_error(png_structp png, png_const_charp message) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  std::snprintf(state->message, sizeof(state->message), "%s", message);
  std::longjmp(state->jump, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

class PngSink final : public ImageSink {
 public:
  PngSink(const std::filesystem::path& path, std::int64_t width, std::int64_t height)
      : ImageSink(width, height), path_(path) {
    if (width < 1 || height < 1 || width > 0x7fffffff || height > 0x7fffffff) {
      throw Error(ErrorCode::invalid_argument, "invalid PNG dimensions");
    }
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) throw Error(ErrorCode::io_error, "cannot create " + path.string());
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state_, on_png_error, on_png_warning);
    info_ = png_ ? png_create_info_struct(png_) : nullptr;
    if (!png_ || !info_) {
      release();
      throw Error(ErrorCode::io_error, "libpng initialisation failed");
    }
    if (!write_header()) fail();
  }

  ~PngSink() override { release(); }

 protected:
  void consume(const PixelBlock& block) override {
    if (!write_rows(block.data.data(), block.height, block.width * 3)) fail();
  }

  void close() override {
    if (!write_end()) fail();
    png_destroy_write_struct(&png_, &info_);
    png_ = nullptr;
    info_ = nullptr;
    if (std::fclose(file_) != 0) {
      file_ = nullptr;
      throw Error(ErrorCode::io_error, "error closing " + path_.string());
    }
    file_ = nullptr;
  }

 private:
  // The three functions below are the only places libpng may longjmp from;
  // they hold no objects with destructors.
  bool write_header() {
    if (setjmp(state_.jump)) return false;
    png_init_io(png_, file_);
    png_set_IHDR(png_, info_, static_cast<png_uint_32>(width()), static_cast<png_uint_32>(height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png_, info_);
    return true;
  }

  bool write_rows(const std::uint8_t* data, std::int64_t rows, std::int64_t stride) {
    if (setjmp(state_.jump)) return false;
    for (std::int64_t r = 0; r < rows; ++r) {
      png_write_row(png_, data + r * stride);
    }
    return true;
  }

  bool write_end() {
    if (setjmp(state_.jump)) return false;
    png_write_end(png_, nullptr);
    return true;
  }

  [[noreturn]] void fail() {
    const std::string message = state_.message;
    release();
    throw Error(ErrorCode::io_error, "PNG write failed for " + path_.string() + ": " + message);
  }

  void release() {
    if (png_) png_destroy_write_struct(&png_, info_ ? &info_ : nullptr);
    png_ = nullptr;
    info_ = nullptr;
    if (file_) {
      std::fclose(file_);
      file_ = nullptr;
    }
  }

  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
  PngErrorState state_;
};

}  // namespace

std::unique_ptr<ImageSink> open_png_sink(const std::filesystem::path& path, std::int64_t width,
                                         std::int64_t height) {
  return std::make_unique<PngSink>(path, width, height);
}

}  // namespace spcn
