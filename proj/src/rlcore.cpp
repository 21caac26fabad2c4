// SPDX-License-Identifier: Apache-2.0
#include "maye/rlcore.hpp"

#include <algorithm>
#include <cmath>

#include "maye/errors.hpp"

namespace maye {

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(batch_size > 0, "batch_size must be positive");
    require(forward_batch_size > 0, "forward_batch_size must be positive");
    require(ppo_batch_size > 0, "ppo_batch_size must be positive");
    require(batch_size % ppo_batch_size == 0, "batch_size must be divisible by ppo_batch_size");
    require(gradient_accumulation_steps > 0, "gradient_accumulation_steps must be positive");
    require(ppo_batch_size % gradient_accumulation_steps == 0,
            "ppo_batch_size must be divisible by gradient_accumulation_steps");
    require(ppo_backward_batch_size * gradient_accumulation_steps == ppo_batch_size,
            "ppo_backward_batch_size must equal ppo_batch_size / gradient_accumulation_steps");
    require(ppo_epochs > 0, "ppo_epochs must be positive");
    require(epochs >= 0, "epochs must be non-negative");
    require(epsilon > 0.0, "epsilon must be positive");
    require(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
    require(kl_loss_coeff >= 0.0, "kl_loss_coeff must be non-negative");
    require(kl_reward_coeff >= 0.0, "kl_reward_coeff must be non-negative");
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction must be in [0, 1)");
    require(clip_grad_norm > 0.0, "clip_grad_norm must be positive");
}

double kl_k3(double logp_policy, double logp_ref) {
    if (!std::isfinite(logp_policy) || !std::isfinite(logp_ref)) {
        throw ContractViolation("kl_k3: non-finite log-probability");
    }
    const double d = logp_ref - logp_policy;
    // expm1 keeps r - 1 - ln r accurate near d == 0.
    return std::expm1(d) - d;
}

Eigen::VectorXd assemble_token_rewards(const Trajectory& traj, const TrainConfig& cfg) {
    const int n = traj.response_length;
    Eigen::VectorXd rewards = Eigen::VectorXd::Zero(n);

    int terminal = -1;
    if (traj.eos_index.has_value()) {
        terminal = *traj.eos_index;
    } else if (!cfg.require_eos_for_reward && n > 0) {
        terminal = n - 1;
    }
    if (terminal >= 0) rewards[terminal] = traj.reward.total;

    if (cfg.kl_reward_coeff > 0.0) {
        for (int t = 0; t < n; ++t) {
            rewards[t] -= cfg.kl_reward_coeff * kl_k3(traj.old_logprobs[t], traj.ref_logprobs[t]);
        }
    }
    return rewards;
}

Eigen::VectorXd estimate_advantages(const Eigen::VectorXd& token_rewards, double gamma) {
    const Eigen::Index n = token_rewards.size();
    Eigen::VectorXd adv(n);
    double running = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        running = token_rewards[t] + gamma * running;
        adv[t] = running;
    }
    return adv;
}

void normalize_advantages(std::span<Trajectory> batch) {
    std::int64_t count = 0;
    double sum = 0.0;
    for (const Trajectory& traj : batch) {
        sum += traj.advantages.head(traj.response_length).sum();
        count += traj.response_length;
    }
    if (count == 0) return;
    const double mean = sum / static_cast<double>(count);

    double sq = 0.0;
    for (const Trajectory& traj : batch) {
        sq += (traj.advantages.head(traj.response_length).array() - mean).square().sum();
    }
    const double stddev = std::sqrt(sq / static_cast<double>(count));

    for (Trajectory& traj : batch) {
        auto head = traj.advantages.head(traj.response_length);
        head.array() -= mean;
        if (stddev > 1e-12) head /= stddev;
    }
}

ObjectiveTerms objective_terms(const Eigen::VectorXd& new_logprobs, const Trajectory& traj,
                               double epsilon, double kl_loss_coeff) {
    const int n = traj.response_length;
    if (new_logprobs.size() != n || traj.old_logprobs.size() != n ||
        traj.ref_logprobs.size() != n || traj.advantages.size() != n) {
        throw ContractViolation("objective_terms: length mismatch");
    }
    if (!new_logprobs.allFinite() || !traj.old_logprobs.allFinite() ||
        !traj.ref_logprobs.allFinite() || !traj.advantages.allFinite()) {
        throw ContractViolation("objective_terms: non-finite input");
    }

    ObjectiveTerms out;
    out.dloss_dlogp = Eigen::VectorXd::Zero(n);
    if (n == 0) return out;

    const double inv_len = 1.0 / static_cast<double>(n);
    double objective = 0.0;
    double kl_sum = 0.0;

    for (int t = 0; t < n; ++t) {
        const double adv = traj.advantages[t];
        const double ratio = std::exp(new_logprobs[t] - traj.old_logprobs[t]);
        const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
        const double unclipped_term = ratio * adv;
        const double clipped_term = clipped * adv;

        double surrogate;
        double dsur_dlogp;
        if (unclipped_term <= clipped_term) {
            surrogate = unclipped_term;
            dsur_dlogp = ratio * adv;  // d(exp(x - old) * adv)/dx
        } else {
            surrogate = clipped_term;
            // Active clip: flat outside the band, pass-through inside.
            const bool outside = ratio < 1.0 - epsilon || ratio > 1.0 + epsilon;
            dsur_dlogp = outside ? 0.0 : ratio * adv;
            if (outside) ++out.clipped_tokens;
        }

        const double d = traj.ref_logprobs[t] - new_logprobs[t];
        const double k3 = std::expm1(d) - d;
        const double dk3_dlogp = 1.0 - std::exp(d);

        objective += surrogate - kl_loss_coeff * k3;
        kl_sum += k3;
        out.ratio_sum += ratio;
        out.dloss_dlogp[t] = -inv_len * (dsur_dlogp - kl_loss_coeff * dk3_dlogp);
    }

    out.loss = -inv_len * objective;
    out.kl_loss = kl_loss_coeff * inv_len * kl_sum;
    return out;
}

ObjectiveResult clipped_objective(const Eigen::VectorXd& new_logprobs, const Trajectory& traj,
                                  const TrainConfig& cfg) {
    const ObjectiveTerms terms =
        objective_terms(new_logprobs, traj, cfg.epsilon, cfg.kl_loss_coeff);
    ObjectiveResult res;
    res.loss = terms.loss;
    const double n = std::max(1, traj.response_length);
    res.diag.mean_ratio = terms.ratio_sum / n;
    res.diag.clip_fraction = static_cast<double>(terms.clipped_tokens) / n;
    res.diag.kl_loss = terms.kl_loss;
    return res;
}

void optimizer_step(std::span<Eigen::MatrixXd* const> params,
                    std::span<const Eigen::MatrixXd* const> grads, AdamState& state,
                    double lr_now, double clip_grad_norm) {
    if (params.size() != grads.size()) {
        throw ContractViolation("optimizer_step: block count mismatch");
    }
    const std::size_t nblocks = params.size();

    if (state.m.empty()) {
        state.m.reserve(nblocks);
        state.v.reserve(nblocks);
        for (std::size_t i = 0; i < nblocks; ++i) {
            state.m.push_back(Eigen::MatrixXd::Zero(params[i]->rows(), params[i]->cols()));
            state.v.push_back(Eigen::MatrixXd::Zero(params[i]->rows(), params[i]->cols()));
        }
    }

    double sq_norm = 0.0;
    for (std::size_t i = 0; i < nblocks; ++i) {
        if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols()) {
            throw ContractViolation("optimizer_step: gradient shape mismatch");
        }
        if (!grads[i]->allFinite()) {
            throw PipelineFault("optimizer_step: non-finite gradient, aborting");
        }
        sq_norm += grads[i]->squaredNorm();
    }
    const double norm = std::sqrt(sq_norm);
    const double scale = norm > clip_grad_norm ? clip_grad_norm / norm : 1.0;

    ++state.t;
    const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < nblocks; ++i) {
        const Eigen::MatrixXd g = *grads[i] * scale;
        state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * g;
        state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * g.cwiseProduct(g);
        const Eigen::MatrixXd m_hat = state.m[i] / bc1;
        const Eigen::MatrixXd v_hat = state.v[i] / bc2;
        params[i]->array() -=
            lr_now * m_hat.array() / (v_hat.array().sqrt() + AdamState::kEps);
    }
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
    if (step < 0 || step > total_steps) {
        throw ContractViolation("lr_schedule: step outside [0, total_steps]");
    }
    if (total_steps == 0) return 0.0;
    const double warmup = cfg.warmup_fraction * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (warmup > 0.0 && s <= warmup) {
        return cfg.learning_rate * s / warmup;
    }
    const double span = static_cast<double>(total_steps) - warmup;
    if (span <= 0.0) return 0.0;
    const double progress = (s - warmup) / span;
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace maye
