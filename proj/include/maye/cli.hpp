// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace maye {

/// Entry point behind main(). `args` excludes the program name.
/// Subcommands: gen, train, eval, report. The MAYE_OUT environment variable,
/// when set, overrides the output root for train and the default run root for
/// report. Returns 0 on success, 1 on a runtime fault, 2 on a usage or
/// configuration error.
int cli_run(const std::vector<std::string>& args);

}  // namespace maye
