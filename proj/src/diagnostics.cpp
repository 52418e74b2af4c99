#include "spcn/diagnostics.hpp"

#include <iostream>
#include <mutex>

#include "spcn/buffer_tracker.hpp"
#include "spcn/error.hpp"

namespace spcn {
namespace {

std::mutex g_sink_mutex;

MessageSink& sink_slot() {
  static MessageSink sink = [](Severity severity, std::string_view message) {
    if (severity == Severity::warning) std::cerr << "warning: " << message << '\n';
  };
  return sink;
}

}  // namespace

void set_message_sink(MessageSink sink) {
  std::lock_guard lock(g_sink_mutex);
  sink_slot() = std::move(sink);
}

void emit(Severity severity, std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (sink_slot()) sink_slot()(severity, message);
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::unsupported_format: return "unsupported format";
    case ErrorCode::corrupt_file: return "corrupt file";
    case ErrorCode::out_of_bounds: return "out of bounds";
    case ErrorCode::out_of_order: return "out of order";
    case ErrorCode::io_error: return "I/O error";
    case ErrorCode::insufficient_pixels: return "insufficient pixels";
    case ErrorCode::blank_slide: return "blank slide";
    case ErrorCode::stain_absent: return "stain absent";
    case ErrorCode::degenerate_stain: return "degenerate stain density";
  }
  return "unknown error";
}

PixelBufferStats& PixelBufferStats::instance() {
  static PixelBufferStats stats;
  return stats;
}

}  // namespace spcn
