// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace maye {

/// Invalid user-supplied configuration (bad flag, bad config key/value).
/// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file. Carries the 1-based line number when known.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, long line_number = 0)
        : std::runtime_error(line_number > 0 ? msg + " (line " + std::to_string(line_number) + ")"
                                             : msg),
          line(line_number) {}
    long line;
};

/// Caller broke an API precondition (out-of-vocab token, NaN input, shape mismatch).
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

/// Internal pipeline state went bad mid-run (stale engine weights, non-finite loss).
struct PipelineFault : std::runtime_error {
    explicit PipelineFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace maye
