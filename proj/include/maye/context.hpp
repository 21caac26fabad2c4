// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "maye/errors.hpp"
#include "maye/rng.hpp"

namespace maye {

// Context layout: one-hot tens digit block [0,10), one-hot ones digit block
// [10,20), then noise coordinates. The answer is linearly decodable from the
// two blocks.
inline constexpr int kContextDigitBlocks = 2;
inline constexpr int kContextNoiseDims = 4;
inline constexpr int kContextDim = 10 * kContextDigitBlocks + kContextNoiseDims;

inline constexpr int kMaxAnswer = 99;

inline Eigen::VectorXd encode_context(int answer, rng::Stream& stream) {
    if (answer < 0 || answer > kMaxAnswer) {
        throw ContractViolation("encode_context: answer out of [0, 99]");
    }
    Eigen::VectorXd ctx = Eigen::VectorXd::Zero(kContextDim);
    ctx[answer / 10] = 1.0;
    ctx[10 + answer % 10] = 1.0;
    for (int i = 20; i < kContextDim; ++i) ctx[i] = stream.uniform(0.0, 0.1);
    return ctx;
}

}  // namespace maye
