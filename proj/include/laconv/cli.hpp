#pragma once

#include <string>
#include <vector>

namespace laconv::cli {

/// Dispatches one subcommand (gen-data | train | eval | gradcheck |
/// ablate | params | inspect). Returns 0 on success, 1 on validation
/// errors or a failed gradient audit, 2 on I/O errors.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace laconv::cli
