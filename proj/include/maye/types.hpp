// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace maye {

/// One sampled completion. `tokens` ends with EOS when `finished` is true;
/// a response cut off at max_tokens has finished == false. Never padded.
struct Response {
    std::vector<int> tokens;
    bool finished = false;
};

}  // namespace maye
