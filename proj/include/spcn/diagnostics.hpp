#pragma once

#include <functional>
#include <string_view>

namespace spcn {

enum class Severity { debug, info, warning };

using MessageSink = std::function<void(Severity, std::string_view)>;

// Process-wide sink for progress and warning messages. Defaults to writing
// warnings to stderr and dropping info/debug. Thread-safe.
void set_message_sink(MessageSink sink);
void emit(Severity severity, std::string_view message);

inline void warn(std::string_view message) { emit(Severity::warning, message); }
inline void info(std::string_view message) { emit(Severity::info, message); }

}  // namespace spcn
