#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace selfonn::cli {

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kUsage = 2,     // bad flags or configuration
    kIo = 3,        // unreadable / unwritable files
    kData = 4,      // malformed images, manifests, plans, datasets
    kMismatch = 5,  // weight file or shape mismatch
    kDivergence = 6 // non-finite loss during training
};

/// Runs `selfonn-kit` with args[0] being the subcommand. Normal output goes to
/// `out`, diagnostics and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace selfonn::cli
