// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "forgetlab/cli/run_config.hpp"
#include "forgetlab/error.hpp"

namespace forgetlab::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitValidation = 2,
    kExitRewriter = 3,
    kExitDivergence = 4,
};

/// Bad command line: unknown subcommand or flag, or a required path missing
/// after config resolution.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Invocation {
    std::string command;  // asd | synth | train | report | eval | help | version
    RunConfig config;
    std::string text;  // help or version text
};

/// Parses arguments (without the program name) and resolves every setting
/// with precedence flag > --config file > default. Throws UsageError or
/// ValidationError; nothing is executed or written.
[[nodiscard]] Invocation parse_invocation(const std::vector<std::string>& args);

/// Full entry point. Human-readable output goes to `out`; on success the
/// last line written to `out` is a one-line JSON summary. Diagnostics go to
/// `err`. Returns an ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

[[nodiscard]] std::string version_string();

}  // namespace forgetlab::cli
