#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spcn {

enum class ErrorCode {
  invalid_argument,
  unsupported_format,
  corrupt_file,
  out_of_bounds,
  out_of_order,
  io_error,
  insufficient_pixels,
  blank_slide,
  stain_absent,
  degenerate_stain,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as spcn::Error. The stage label names the
// pipeline step that raised it ("sampling", "basis_fit", ...) when known.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string stage = {})
      : std::runtime_error(message), code_(code), stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

  Error with_stage(std::string stage) const {
    return Error(code_, what(), std::move(stage));
  }

 private:
  ErrorCode code_;
  std::string stage_;
};

}  // namespace spcn
