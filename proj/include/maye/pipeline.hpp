// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maye/evalscheme.hpp"
#include "maye/policy.hpp"
#include "maye/rewards.hpp"
#include "maye/rlcore.hpp"
#include "maye/taskgen.hpp"

namespace maye {

/// Step I output: right-padded prompts with masks, stacked context features,
/// and the original queries kept for later concatenation.
struct ModelInputs {
    std::vector<Query> queries;
    std::vector<std::vector<int>> padded_prompts;          // padded with PAD on the right
    std::vector<std::vector<std::uint8_t>> prompt_mask;    // 1 on real tokens
    Eigen::MatrixXd contexts;                              // context_dim x batch
    int padded_prompt_length = 0;
};

/// Step II output: one response per query, plus a PAD-aligned view.
struct RolloutBatch {
    std::vector<Query> queries;
    std::vector<Response> responses;                // raw sampled tokens
    std::vector<std::vector<int>> padded_responses; // aligned to the longest response
    int aligned_length = 0;
    std::int64_t generation_step = 0;
};

/// In-process stand-in for a separate inference deployment. Sampling always
/// runs on the last explicitly synced snapshot, and collection verifies that
/// the snapshot still matches the live weights, so a skipped sync after an
/// update surfaces as a fault instead of silent off-policy drift.
class SamplingEngine {
public:
    void sync_weights(const PolicyParams& params, std::int64_t generation_step);
    bool synced() const { return snapshot_.has_value(); }
    const PolicySnapshot& snapshot() const;
    std::uint64_t synced_hash() const { return hash_; }

    /// Throws PipelineFault when `live` no longer matches the synced weights.
    void verify_fresh(const PolicyParams& live) const;

private:
    std::optional<PolicySnapshot> snapshot_;
    std::uint64_t hash_ = 0;
};

struct StepCounters {
    std::int64_t generation_steps = 0;
    std::int64_t gradient_steps = 0;
    int epoch = 0;
};

/// Right-pads prompts to a common length and stacks contexts.
/// Throws ConfigError on an empty batch or a prompt over max_prompt_length.
ModelInputs step1_prepare(std::span<const Query* const> queries, const Vocabulary& vocab,
                          int max_prompt_length);

/// Samples one response per query from the engine snapshot. Per-query
/// randomness is keyed by (run_seed, generation_step, query id).
RolloutBatch step2_collect(const SamplingEngine& engine, const PolicyParams& live,
                           const ModelInputs& inputs, const GenerationConfig& gen,
                           std::uint64_t run_seed, std::int64_t generation_step,
                           const Vocabulary& vocab);

/// Builds one trajectory per response: concatenated masks and position ids,
/// old/ref log-probabilities (forward passes grouped in chunks of
/// cfg.forward_batch_size; per-sequence math, so results are chunk-size
/// independent), reward breakdown, and reflection flags.
std::vector<Trajectory> step3_build_trajectories(const RolloutBatch& batch,
                                                 const PolicyParams& params,
                                                 const PolicySnapshot& ref, const TrainConfig& cfg,
                                                 const Vocabulary& vocab, double lambda_lang);

/// Loss diagnostics averaged over the optimizer steps of one generation step.
struct UpdateDiagnostics {
    double mean_loss = 0.0;
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double mean_kl_loss = 0.0;
    double last_lr = 0.0;
    int updates = 0;
};

/// Step IV: fills token rewards and advantages, shuffles deterministically by
/// (run_seed, generation_step, ppo_epoch), then runs
/// (batch_size / ppo_batch_size) * ppo_epochs optimizer steps. When the
/// rollout holds k * batch_size trajectories, each optimizer step consumes
/// k * ppo_batch_size of them (the data-parallel reading of a multi-shard
/// rollout), keeping the counter law intact for any rollout size.
UpdateDiagnostics step4_update(std::vector<Trajectory>& trajectories, PolicyParams& params,
                               AdamState& opt_state, const TrainConfig& cfg,
                               StepCounters& counters, std::int64_t total_gradient_steps,
                               std::uint64_t run_seed);

struct PipelineOptions {
    PolicyDims dims;
    int rollout_batch = 0;  // queries sampled per generation step; 0 -> batch_size
    double lambda_lang = kDefaultLanguagePenalty;
    bool warm_start = true;
    bool evaluate_validation = true;
    bool write_checkpoints = true;
    int max_prompt_length = 64;
    std::filesystem::path out_dir;  // this run's directory
};

struct RunResult {
    StepCounters counters;
    std::vector<double> epoch_train_accuracy;  // index 0 holds epoch 1
    std::vector<MetricsRecord> train_records;
    std::vector<EvalRecord> eval_records;  // includes the epoch-0 baseline
    std::filesystem::path run_dir;
};

/// ceil(n_train / rollout_batch): how many generation steps one epoch takes.
std::int64_t generation_steps_per_epoch(int n_train, int rollout_batch);

/// Runs the four-step loop for cfg.epochs epochs over the Train split,
/// evaluating the Validation split before training and after every epoch.
/// Writes config.json, metrics_train.csv, metrics_eval.csv, events.jsonl,
/// MANIFEST.json and checkpoints into options.out_dir, flushing after every
/// row so aborted runs keep their partial metrics. Fully deterministic in
/// cfg.seed: only MANIFEST.json contains wall-clock data.
RunResult train(const Dataset& dataset, const TrainConfig& cfg, const GenerationConfig& gen,
                const PipelineOptions& options);

}  // namespace maye
