// SPDX-License-Identifier: Apache-2.0
#include "maye/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <string_view>

#include "maye/errors.hpp"

namespace maye {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string_view>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError("config: unknown key \"" + where + key + "\"");
        }
    }
}

template <typename T>
void assign(const json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void parse_train(const json& j, TrainConfig& cfg) {
    reject_unknown_keys(j,
                        {"batch_size", "forward_batch_size", "ppo_batch_size",
                         "ppo_backward_batch_size", "gradient_accumulation_steps", "ppo_epochs",
                         "epochs", "epsilon", "gamma", "kl_loss_coeff", "kl_reward_coeff",
                         "learning_rate", "warmup_fraction", "clip_grad_norm",
                         "advantage_normalization", "require_eos_for_reward", "seed"},
                        "train.");
    assign(j, "batch_size", cfg.batch_size);
    assign(j, "forward_batch_size", cfg.forward_batch_size);
    assign(j, "ppo_batch_size", cfg.ppo_batch_size);
    assign(j, "ppo_backward_batch_size", cfg.ppo_backward_batch_size);
    assign(j, "gradient_accumulation_steps", cfg.gradient_accumulation_steps);
    assign(j, "ppo_epochs", cfg.ppo_epochs);
    assign(j, "epochs", cfg.epochs);
    assign(j, "epsilon", cfg.epsilon);
    assign(j, "gamma", cfg.gamma);
    assign(j, "kl_loss_coeff", cfg.kl_loss_coeff);
    assign(j, "kl_reward_coeff", cfg.kl_reward_coeff);
    assign(j, "learning_rate", cfg.learning_rate);
    assign(j, "warmup_fraction", cfg.warmup_fraction);
    assign(j, "clip_grad_norm", cfg.clip_grad_norm);
    assign(j, "advantage_normalization", cfg.advantage_normalization);
    assign(j, "require_eos_for_reward", cfg.require_eos_for_reward);
    assign(j, "seed", cfg.seed);
}

void parse_generation(const json& j, GenerationConfig& gen) {
    reject_unknown_keys(j, {"temperature", "top_p", "max_tokens", "n_samples"}, "generation.");
    assign(j, "temperature", gen.temperature);
    assign(j, "top_p", gen.top_p);
    assign(j, "max_tokens", gen.max_tokens);
    assign(j, "n_samples", gen.n_samples);
}

void parse_policy(const json& j, PolicyDims& dims) {
    reject_unknown_keys(j, {"embed", "hidden", "context"}, "policy.");
    assign(j, "embed", dims.embed);
    assign(j, "hidden", dims.hidden);
    assign(j, "context", dims.context);
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());

    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ParseError("config: top level must be a JSON object");

    reject_unknown_keys(j,
                        {"train", "generation", "policy", "rollout_batch", "lambda_lang",
                         "warm_start", "evaluate_validation", "max_prompt_length", "dataset",
                         "out_dir", "seeds"},
                        "");

    RunConfig rc;
    try {
        if (j.contains("train")) parse_train(j.at("train"), rc.train);
        if (j.contains("generation")) parse_generation(j.at("generation"), rc.generation);
        if (j.contains("policy")) parse_policy(j.at("policy"), rc.dims);
        assign(j, "rollout_batch", rc.rollout_batch);
        assign(j, "lambda_lang", rc.lambda_lang);
        assign(j, "warm_start", rc.warm_start);
        assign(j, "evaluate_validation", rc.evaluate_validation);
        assign(j, "max_prompt_length", rc.max_prompt_length);
        assign(j, "dataset", rc.dataset_path);
        assign(j, "out_dir", rc.out_dir);
        assign(j, "seeds", rc.seeds);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }

    if (rc.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    for (std::size_t i = 0; i < rc.seeds.size(); ++i) {
        for (std::size_t k = i + 1; k < rc.seeds.size(); ++k) {
            if (rc.seeds[i] == rc.seeds[k]) {
                throw ConfigError("config: duplicate seed " + std::to_string(rc.seeds[i]));
            }
        }
    }
    return rc;
}

PipelineOptions pipeline_options(const RunConfig& rc, const std::filesystem::path& run_dir) {
    PipelineOptions opts;
    opts.dims = rc.dims;
    opts.rollout_batch = rc.rollout_batch;
    opts.lambda_lang = rc.lambda_lang;
    opts.warm_start = rc.warm_start;
    opts.evaluate_validation = rc.evaluate_validation;
    opts.max_prompt_length = rc.max_prompt_length;
    opts.out_dir = run_dir;
    return opts;
}

}  // namespace maye
