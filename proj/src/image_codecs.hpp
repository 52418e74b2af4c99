#pragma once

#include <filesystem>
#include <memory>

#include "spcn/image_io.hpp"

namespace spcn::detail {

std::unique_ptr<SlideSource> open_png_source(const std::filesystem::path& path);
std::unique_ptr<SlideSource> open_tiff_source(const std::filesystem::path& path);

}  // namespace spcn::detail
