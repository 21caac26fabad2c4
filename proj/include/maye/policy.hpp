// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "maye/context.hpp"
#include "maye/rlcore.hpp"
#include "maye/rng.hpp"
#include "maye/taskgen.hpp"
#include "maye/types.hpp"
#include "maye/vocab.hpp"

namespace maye {

/// Trainable parameters of the recurrent token policy:
///   h_0 = tanh(ctx_proj * context)
///   h_t = tanh(rec * h_{t-1} + inp * emb(x_t) + hidden_bias)
///   logits_t = out * h_t + out_bias
/// All blocks are double precision; biases are stored as column matrices so
/// the optimizer and serialization can treat every block uniformly.
struct PolicyParams {
    Eigen::MatrixXd emb;          // V x E
    Eigen::MatrixXd rec;          // H x H
    Eigen::MatrixXd inp;          // H x E
    Eigen::MatrixXd ctx_proj;     // H x D
    Eigen::MatrixXd out;          // V x H
    Eigen::MatrixXd hidden_bias;  // H x 1
    Eigen::MatrixXd out_bias;     // V x 1

    int vocab_size() const { return static_cast<int>(emb.rows()); }
    int embed_dim() const { return static_cast<int>(emb.cols()); }
    int hidden_dim() const { return static_cast<int>(rec.rows()); }
    int context_dim() const { return static_cast<int>(ctx_proj.cols()); }
    bool all_finite() const;
};

inline constexpr int kPolicyBlockCount = 7;

std::array<Eigen::MatrixXd*, kPolicyBlockCount> param_blocks(PolicyParams& p);
std::array<const Eigen::MatrixXd*, kPolicyBlockCount> param_blocks(const PolicyParams& p);

PolicyParams zeros_like(const PolicyParams& p);

/// Bitwise content hash over all blocks; equal hashes mean identical params.
std::uint64_t params_hash(const PolicyParams& p);

/// Frozen deep copy (reference model or rollout weights). Never mutated.
struct PolicySnapshot {
    PolicyParams params;
    std::int64_t created_step = 0;
};

PolicySnapshot make_snapshot(const PolicyParams& p, std::int64_t step);

struct GenerationConfig {
    double temperature = 1.0;
    double top_p = 1.0;
    int max_tokens = 2048;
    int n_samples = 1;

    void validate() const;
};

struct PolicyDims {
    int embed = 16;
    int hidden = 48;
    int context = kContextDim;
};

/// Gaussian init (std 0.08, zero biases, orthogonal recurrence). With
/// warm_start the policy is additionally pretrained for a fixed number of
/// supervised steps on boxed-skeleton template strings whose target digits
/// follow the context, giving it a format-aware prior with partial task
/// competence (the supervised budget is deliberately too small to saturate).
PolicyParams init_policy(const Vocabulary& vocab, const PolicyDims& dims, std::uint64_t seed,
                         bool warm_start);

/// Exact per-token log-probabilities of `response_tokens` conditioned on the
/// query prompt and context. Full-vocabulary softmax at every position.
Eigen::VectorXd response_logprobs(const PolicyParams& p, const Query& query,
                                  std::span<const int> response_tokens);

Eigen::VectorXd sequence_logprobs(const PolicyParams& p, std::span<const int> prompt,
                                  const Eigen::VectorXd& context,
                                  std::span<const int> response_tokens);

/// Incremental decoding state (hidden vector after the consumed prefix).
struct DecodeState {
    Eigen::VectorXd hidden;
};

DecodeState begin_decode(const PolicyParams& p, const Eigen::VectorXd& context);
void advance_decode(const PolicyParams& p, DecodeState& state, int token);
Eigen::VectorXd next_token_logits(const PolicyParams& p, const DecodeState& state);

/// Temperature-scaled, nucleus-truncated ancestral sampling. PAD is excluded
/// from the candidate set (the distribution is conditioned on non-PAD).
/// Candidates are ordered by (probability desc, id asc), so the degenerate
/// setting temperature <= 0.01, top_p <= 0.001 reduces to greedy argmax with
/// lowest-id tie-breaking and consumes no randomness.
Response sample(const PolicyParams& p, const Query& query, const GenerationConfig& gen,
                rng::Stream& stream);

struct LossSpec {
    double epsilon = 0.2;
    double kl_loss_coeff = 0.0;
};

/// Sums over the given trajectories; callers divide by traj_count once so
/// that chunked accumulation is bitwise identical to a single pass.
struct MinibatchGradient {
    PolicyParams grad;  // d(sum of per-trajectory losses)/d params
    double loss_sum = 0.0;
    double ratio_sum = 0.0;
    std::int64_t clipped_tokens = 0;
    double kl_loss_sum = 0.0;
    std::int64_t token_count = 0;
    int traj_count = 0;
};

MinibatchGradient zero_gradient(const PolicyParams& p);

/// Adds the exact gradient of the clipped objective (backpropagation through
/// the recurrence) for each trajectory, in order, into `acc`. Because every
/// trajectory lands in the shared accumulator one at a time, splitting a
/// minibatch into backward chunks leaves the result bitwise unchanged.
void accumulate_loss_gradient(const PolicyParams& p,
                              std::span<const Trajectory* const> minibatch, const LossSpec& spec,
                              MinibatchGradient& acc);

MinibatchGradient loss_gradient(const PolicyParams& p,
                                std::span<const Trajectory* const> minibatch,
                                const LossSpec& spec);

/// Loss sums only (no gradient); used by finite-difference checks.
double minibatch_loss_sum(const PolicyParams& p, std::span<const Trajectory* const> minibatch,
                          const LossSpec& spec);

/// Flat binary checkpoint with shape header and content hash;
/// load(save(p)) == p bitwise.
void save_policy(const PolicyParams& p, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace maye
