#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "config.hpp"

namespace uln::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
  std::string config_path;
  std::filesystem::path out_dir;
  std::size_t workers = 1;
  std::optional<std::uint64_t> seed;
};

/// Runs one experiment end to end and returns the process exit status:
/// 0 on success, 1 on I/O failure, 2 on a config error and 3 on a
/// numerical failure.
int run_command(Kind kind, const RunOptions& opts);

/// Same as run_command but with an already parsed config; exceptions
/// propagate to the caller.
void execute(const ExperimentConfig& cfg, const RunOptions& opts);

/// Maps an exception to the exit status used by run_command.
int exit_code_for(const std::exception& e);

}  // namespace uln::cli
