#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace fundus {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  /// Combined stdout and stderr.
  std::string output;
};

/// Splits a command template on whitespace, honoring single and double quotes.
std::vector<std::string> split_command(const std::string& command);

/// Runs argv[0] (PATH lookup) with the remaining arguments and waits up to
/// `timeout`; on timeout the child is killed and timed_out is set.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

}  // namespace fundus
