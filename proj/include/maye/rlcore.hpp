// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "maye/rewards.hpp"

namespace maye {

/// Every tunable of the update rule, with the stock defaults used across
/// experiments. Names are kept one-to-one with the config file keys.
struct TrainConfig {
    int batch_size = 128;
    int forward_batch_size = 16;
    int ppo_batch_size = 4;
    int ppo_backward_batch_size = 4;  // == ppo_batch_size / gradient_accumulation_steps
    int gradient_accumulation_steps = 1;
    int ppo_epochs = 1;
    int epochs = 30;
    double epsilon = 0.2;           // clip width
    double gamma = 1.0;             // advantage discount
    double kl_loss_coeff = 0.001;   // KL penalty weight in the loss
    double kl_reward_coeff = 0.0;   // KL weight in the token reward
    double learning_rate = 5.0e-6;
    double warmup_fraction = 0.03;
    double clip_grad_norm = 1.0;
    bool advantage_normalization = false;
    bool require_eos_for_reward = false;
    std::uint64_t seed = 0;

    /// Throws ConfigError if any invariant is violated.
    void validate() const;

    int updates_per_generation_step() const { return batch_size / ppo_batch_size * ppo_epochs; }
};

/// Per-response learning record built in Step III and consumed in Step IV.
/// Vectors indexed by response position have length response_length; the
/// stored response_tokens keep the batch-aligned padding tail.
struct Trajectory {
    std::int64_t query_id = 0;
    std::vector<int> query_tokens;     // unpadded prompt
    std::vector<int> response_tokens;  // padded to the batch-aligned length
    Eigen::VectorXd context;

    std::vector<std::uint8_t> attention_mask;  // over query + padded response
    std::vector<int> position_ids;             // consecutive over mask==1 positions

    Eigen::VectorXd old_logprobs;  // response positions only
    Eigen::VectorXd ref_logprobs;  // response positions only

    RewardBreakdown reward;
    Eigen::VectorXd token_rewards;  // filled by assemble_token_rewards
    Eigen::VectorXd advantages;     // filled by estimate_advantages

    int response_length = 0;
    std::optional<int> eos_index;            // position of EOS within the response
    std::array<bool, 15> reflection_flags{};  // per word, order of the curated list
};

/// Single-sample KL estimate r - 1 - ln r with r = exp(logp_ref - logp_policy).
/// Non-negative, zero iff the two log-probabilities coincide.
double kl_k3(double logp_policy, double logp_ref);

/// token_rewards[t] = I(t == terminal) * reward.total
///                    - kl_reward_coeff * kl_k3(old_logprobs[t], ref_logprobs[t]).
/// The terminal position is eos_index when present; otherwise the last
/// generated token, or nowhere if require_eos_for_reward is set.
Eigen::VectorXd assemble_token_rewards(const Trajectory& traj, const TrainConfig& cfg);

/// Discounted suffix sums, one backward pass:
/// advantages[t] = sum_{k>=t} gamma^(k-t) * token_rewards[k].
Eigen::VectorXd estimate_advantages(const Eigen::VectorXd& token_rewards, double gamma);

/// Standardizes advantages to zero mean / unit variance over all valid
/// response tokens of the batch. No-op on the degenerate zero-variance case.
void normalize_advantages(std::span<Trajectory> batch);

struct LossDiagnostics {
    double mean_ratio = 0.0;
    double clip_fraction = 0.0;
    double kl_loss = 0.0;
};

struct ObjectiveResult {
    double loss = 0.0;
    LossDiagnostics diag;
};

/// Per-trajectory pieces of the clipped objective, including the exact
/// derivative of the (negated, 1/|o|-weighted) loss w.r.t. each new
/// log-probability. Backpropagation consumes dloss_dlogp.
struct ObjectiveTerms {
    double loss = 0.0;               // -(1/T) sum_t [min(r A, clip(r) A) - beta * k3]
    Eigen::VectorXd dloss_dlogp;     // length T
    double ratio_sum = 0.0;
    int clipped_tokens = 0;
    double kl_loss = 0.0;            // beta * (1/T) sum_t k3(new, ref)
};

ObjectiveTerms objective_terms(const Eigen::VectorXd& new_logprobs, const Trajectory& traj,
                               double epsilon, double kl_loss_coeff);

/// Spec-facing wrapper over objective_terms for a single trajectory.
ObjectiveResult clipped_objective(const Eigen::VectorXd& new_logprobs, const Trajectory& traj,
                                  const TrainConfig& cfg);

/// Adaptive-moment optimizer state; block shapes mirror the parameter blocks
/// handed to optimizer_step.
struct AdamState {
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;
    std::int64_t t = 0;

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
};

/// Clips the global gradient norm to clip_grad_norm, then applies one Adam
/// update in place. Deterministic. Throws PipelineFault on non-finite input.
void optimizer_step(std::span<Eigen::MatrixXd* const> params,
                    std::span<const Eigen::MatrixXd* const> grads, AdamState& state,
                    double lr_now, double clip_grad_norm);

/// Linear warmup from 0 over warmup_fraction * total_steps, then cosine decay
/// to 0 at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg);

}  // namespace maye
