// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maye/pipeline.hpp"
#include "maye/policy.hpp"
#include "maye/rewards.hpp"
#include "maye/rlcore.hpp"

namespace maye {

/// Everything a training invocation needs, resolved from a JSON config file.
/// Key names match the TrainConfig field names one-to-one.
struct RunConfig {
    TrainConfig train;
    GenerationConfig generation;
    PolicyDims dims;
    int rollout_batch = 0;  // 0 -> train.batch_size
    double lambda_lang = kDefaultLanguagePenalty;
    bool warm_start = true;
    bool evaluate_validation = true;
    int max_prompt_length = 64;
    std::string dataset_path;
    std::string out_dir = "runs";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
};

/// Strict loader: any unrecognized key anywhere in the file is a ConfigError,
/// so misspelled hyperparameters cannot be silently ignored. Missing keys
/// keep their defaults. Throws ParseError on malformed JSON.
RunConfig load_run_config(const std::filesystem::path& path);

PipelineOptions pipeline_options(const RunConfig& rc, const std::filesystem::path& run_dir);

}  // namespace maye
