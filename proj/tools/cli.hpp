#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcn/error.hpp"
#include "spcn/pipeline.hpp"

namespace spcn::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kBatchFailures = 1,     // batch finished but some inputs failed
  kBadInput = 2,          // invalid arguments, unreadable/unsupported input, empty batch directory
  kBlankSlide = 3,        // no tissue found
  kDegenerateStain = 4,   // a stain has zero density (single-stain image)
  kWriteFailure = 5,      // output could not be written
};

int exit_code_for(const Error& error);

// Resolved settings shared by every subcommand.
struct CliConfig {
  FitConfig fit;
  std::int64_t strip_height = kDefaultStripHeight;
  int workers = 0;
  bool verbose = false;
  std::filesystem::path stats_csv;

  TransformConfig transform_config() const;
};

// Entry point used by the `spcn` binary; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace spcn::cli
