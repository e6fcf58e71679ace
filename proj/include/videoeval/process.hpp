#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace videoeval {

struct ProcessResult {
  int exit_code = -1;
  std::string stdout_data;
};

// Runs argv[0] (looked up on PATH when it has no slash) with the remaining
// arguments, feeding `stdin_data` and collecting stdout. Throws
// std::runtime_error when the process cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, std::string_view stdin_data = {});

}  // namespace videoeval
