// SPDX-License-Identifier: Apache-2.0
#include "maye/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "maye/errors.hpp"
#include "maye/rng.hpp"

namespace maye {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kRolloutSalt = 0x726f6c6c6f7574ULL;  // "rollout"
constexpr std::uint64_t kShuffleSalt = 0x73687566666cULL;    // "shuffl"
constexpr std::uint64_t kEpochSalt = 0x65706f6368ULL;        // "epoch"

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ConfigError("write failed for " + path.string());
}

ordered_json train_config_json(const TrainConfig& cfg) {
    ordered_json j;
    j["batch_size"] = cfg.batch_size;
    j["forward_batch_size"] = cfg.forward_batch_size;
    j["ppo_batch_size"] = cfg.ppo_batch_size;
    j["ppo_backward_batch_size"] = cfg.ppo_backward_batch_size;
    j["gradient_accumulation_steps"] = cfg.gradient_accumulation_steps;
    j["ppo_epochs"] = cfg.ppo_epochs;
    j["epochs"] = cfg.epochs;
    j["epsilon"] = cfg.epsilon;
    j["gamma"] = cfg.gamma;
    j["kl_loss_coeff"] = cfg.kl_loss_coeff;
    j["kl_reward_coeff"] = cfg.kl_reward_coeff;
    j["learning_rate"] = cfg.learning_rate;
    j["warmup_fraction"] = cfg.warmup_fraction;
    j["clip_grad_norm"] = cfg.clip_grad_norm;
    j["advantage_normalization"] = cfg.advantage_normalization;
    j["require_eos_for_reward"] = cfg.require_eos_for_reward;
    j["seed"] = cfg.seed;
    return j;
}

ordered_json resolved_config_json(const TrainConfig& cfg, const GenerationConfig& gen,
                                  const PipelineOptions& options, int rollout_batch) {
    ordered_json j;
    j["train"] = train_config_json(cfg);
    j["generation"] = {{"temperature", gen.temperature},
                       {"top_p", gen.top_p},
                       {"max_tokens", gen.max_tokens},
                       {"n_samples", gen.n_samples}};
    j["policy"] = {{"embed", options.dims.embed},
                   {"hidden", options.dims.hidden},
                   {"context", options.dims.context}};
    j["rollout_batch"] = rollout_batch;
    j["lambda_lang"] = options.lambda_lang;
    j["warm_start"] = options.warm_start;
    j["evaluate_validation"] = options.evaluate_validation;
    j["max_prompt_length"] = options.max_prompt_length;
    return j;
}

}  // namespace

void SamplingEngine::sync_weights(const PolicyParams& params, std::int64_t generation_step) {
    snapshot_ = make_snapshot(params, generation_step);
    hash_ = params_hash(params);
}

const PolicySnapshot& SamplingEngine::snapshot() const {
    if (!snapshot_) throw PipelineFault("sampling engine used before any weight sync");
    return *snapshot_;
}

void SamplingEngine::verify_fresh(const PolicyParams& live) const {
    if (!snapshot_) throw PipelineFault("sampling engine used before any weight sync");
    if (params_hash(live) != hash_) {
        throw PipelineFault("sampling engine weights are stale: sync_weights was not called "
                            "after the last parameter update");
    }
}

ModelInputs step1_prepare(std::span<const Query* const> queries, const Vocabulary& vocab,
                          int max_prompt_length) {
    if (queries.empty()) throw ConfigError("step1_prepare: empty batch");

    std::size_t max_len = 0;
    for (const Query* q : queries) {
        if (q->split != Split::Train) {
            throw ContractViolation("step1_prepare: query outside the Train split");
        }
        if (static_cast<int>(q->prompt_tokens.size()) > max_prompt_length) {
            throw ConfigError("step1_prepare: prompt of query " + std::to_string(q->id) +
                              " exceeds max_prompt_length");
        }
        max_len = std::max(max_len, q->prompt_tokens.size());
    }

    ModelInputs inputs;
    inputs.padded_prompt_length = static_cast<int>(max_len);
    inputs.queries.reserve(queries.size());
    inputs.padded_prompts.reserve(queries.size());
    inputs.prompt_mask.reserve(queries.size());
    inputs.contexts.resize(queries[0]->context.size(), static_cast<Eigen::Index>(queries.size()));

    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Query& q = *queries[i];
        inputs.queries.push_back(q);

        std::vector<int> padded = q.prompt_tokens;
        padded.resize(max_len, vocab.pad());
        std::vector<std::uint8_t> mask(max_len, 0);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(q.prompt_tokens.size()),
                  std::uint8_t{1});
        inputs.padded_prompts.push_back(std::move(padded));
        inputs.prompt_mask.push_back(std::move(mask));
        inputs.contexts.col(static_cast<Eigen::Index>(i)) = q.context;
    }
    return inputs;
}

RolloutBatch step2_collect(const SamplingEngine& engine, const PolicyParams& live,
                           const ModelInputs& inputs, const GenerationConfig& gen,
                           std::uint64_t run_seed, std::int64_t generation_step,
                           const Vocabulary& vocab) {
    engine.verify_fresh(live);
    gen.validate();

    RolloutBatch batch;
    batch.queries = inputs.queries;
    batch.generation_step = generation_step;
    batch.responses.reserve(inputs.queries.size());

    const PolicyParams& weights = engine.snapshot().params;
    std::size_t max_len = 0;
    for (const Query& q : inputs.queries) {
        auto stream = rng::derive_stream({run_seed, kRolloutSalt,
                                          static_cast<std::uint64_t>(generation_step),
                                          static_cast<std::uint64_t>(q.id)});
        batch.responses.push_back(sample(weights, q, gen, stream));
        max_len = std::max(max_len, batch.responses.back().tokens.size());
    }

    batch.aligned_length = static_cast<int>(max_len);
    batch.padded_responses.reserve(batch.responses.size());
    for (const Response& r : batch.responses) {
        std::vector<int> padded = r.tokens;
        padded.resize(max_len, vocab.pad());
        batch.padded_responses.push_back(std::move(padded));
    }
    return batch;
}

std::vector<Trajectory> step3_build_trajectories(const RolloutBatch& batch,
                                                 const PolicyParams& params,
                                                 const PolicySnapshot& ref, const TrainConfig& cfg,
                                                 const Vocabulary& vocab, double lambda_lang) {
    const std::size_t n = batch.queries.size();
    if (batch.responses.size() != n || batch.padded_responses.size() != n) {
        throw ContractViolation("step3_build_trajectories: misaligned rollout batch");
    }

    std::vector<Trajectory> trajs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Query& q = batch.queries[i];
        const Response& r = batch.responses[i];
        Trajectory& t = trajs[i];

        t.query_id = q.id;
        t.query_tokens = q.prompt_tokens;
        t.response_tokens = batch.padded_responses[i];
        t.context = q.context;
        t.response_length = static_cast<int>(r.tokens.size());
        if (r.finished) t.eos_index = t.response_length - 1;

        const std::size_t total = q.prompt_tokens.size() + t.response_tokens.size();
        t.attention_mask.assign(total, 0);
        t.position_ids.assign(total, 0);
        const std::size_t real = q.prompt_tokens.size() + r.tokens.size();
        for (std::size_t pos = 0; pos < real; ++pos) {
            t.attention_mask[pos] = 1;
            t.position_ids[pos] = static_cast<int>(pos);
        }

        t.reward = score(r, q, vocab, lambda_lang);
        const auto counts = count_reflection_words(vocab.decode(r.tokens));
        for (int w = 0; w < kReflectionWordCount; ++w) {
            t.reflection_flags[static_cast<std::size_t>(w)] =
                counts[static_cast<std::size_t>(w)] > 0;
        }
    }

    // Old/ref log-probabilities, grouped in forward chunks. Each sequence is
    // scored independently, so the grouping cannot change any result.
    const int chunk = std::max(1, cfg.forward_batch_size);
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(chunk)) {
        const std::size_t end = std::min(n, begin + static_cast<std::size_t>(chunk));
        for (std::size_t i = begin; i < end; ++i) {
            Trajectory& t = trajs[i];
            const std::span<const int> response(t.response_tokens.data(),
                                                static_cast<std::size_t>(t.response_length));
            t.old_logprobs = sequence_logprobs(params, t.query_tokens, t.context, response);
            t.ref_logprobs =
                sequence_logprobs(ref.params, t.query_tokens, t.context, response);
        }
    }
    return trajs;
}

UpdateDiagnostics step4_update(std::vector<Trajectory>& trajectories, PolicyParams& params,
                               AdamState& opt_state, const TrainConfig& cfg,
                               StepCounters& counters, std::int64_t total_gradient_steps,
                               std::uint64_t run_seed) {
    const std::size_t n = trajectories.size();
    if (n == 0 || n % static_cast<std::size_t>(cfg.batch_size) != 0) {
        throw ContractViolation("step4_update: rollout size must be a positive multiple of "
                                "batch_size");
    }
    const std::size_t shards = n / static_cast<std::size_t>(cfg.batch_size);
    const std::size_t per_update = shards * static_cast<std::size_t>(cfg.ppo_batch_size);
    const int updates_per_ppo_epoch = cfg.batch_size / cfg.ppo_batch_size;

    for (Trajectory& t : trajectories) {
        t.token_rewards = assemble_token_rewards(t, cfg);
        t.advantages = estimate_advantages(t.token_rewards, cfg.gamma);
    }
    if (cfg.advantage_normalization) normalize_advantages(trajectories);

    const LossSpec spec{cfg.epsilon, cfg.kl_loss_coeff};
    UpdateDiagnostics diag;
    double loss_total = 0.0;
    double ratio_total = 0.0;
    double clip_total = 0.0;
    double kl_total = 0.0;

    for (int ppo_epoch = 0; ppo_epoch < cfg.ppo_epochs; ++ppo_epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_stream = rng::derive_stream(
            {run_seed, kShuffleSalt, static_cast<std::uint64_t>(counters.generation_steps),
             static_cast<std::uint64_t>(ppo_epoch)});
        rng::shuffle(order, shuffle_stream);

        for (int u = 0; u < updates_per_ppo_epoch; ++u) {
            std::vector<const Trajectory*> minibatch;
            minibatch.reserve(per_update);
            for (std::size_t j = 0; j < per_update; ++j) {
                minibatch.push_back(&trajectories[order[static_cast<std::size_t>(u) * per_update + j]]);
            }

            MinibatchGradient acc = zero_gradient(params);
            const std::size_t backward_chunk = static_cast<std::size_t>(cfg.ppo_backward_batch_size);
            for (std::size_t begin = 0; begin < minibatch.size(); begin += backward_chunk) {
                const std::size_t end = std::min(minibatch.size(), begin + backward_chunk);
                accumulate_loss_gradient(
                    params, std::span<const Trajectory* const>(minibatch.data() + begin, end - begin),
                    spec, acc);
            }

            const double m = static_cast<double>(acc.traj_count);
            for (Eigen::MatrixXd* g : param_blocks(acc.grad)) *g /= m;
            const double mean_loss = acc.loss_sum / m;
            if (!std::isfinite(mean_loss)) {
                throw PipelineFault("step4_update: non-finite loss at gradient step " +
                                    std::to_string(counters.gradient_steps + 1));
            }

            const double lr_now =
                lr_schedule(counters.gradient_steps + 1, total_gradient_steps, cfg);
            auto blocks = param_blocks(params);
            auto grad_blocks = param_blocks(static_cast<const PolicyParams&>(acc.grad));
            optimizer_step(blocks, grad_blocks, opt_state, lr_now, cfg.clip_grad_norm);
            ++counters.gradient_steps;

            loss_total += mean_loss;
            ratio_total += acc.ratio_sum / static_cast<double>(acc.token_count);
            clip_total += static_cast<double>(acc.clipped_tokens) /
                          static_cast<double>(acc.token_count);
            kl_total += acc.kl_loss_sum / m;
            diag.last_lr = lr_now;
            ++diag.updates;
        }
    }

    const double u = static_cast<double>(diag.updates);
    diag.mean_loss = loss_total / u;
    diag.mean_ratio = ratio_total / u;
    diag.clip_fraction = clip_total / u;
    diag.mean_kl_loss = kl_total / u;
    return diag;
}

std::int64_t generation_steps_per_epoch(int n_train, int rollout_batch) {
    if (n_train <= 0 || rollout_batch <= 0) {
        throw ConfigError("generation_steps_per_epoch: sizes must be positive");
    }
    return (static_cast<std::int64_t>(n_train) + rollout_batch - 1) / rollout_batch;
}

namespace {

struct RunFiles {
    std::ofstream metrics_train;
    std::ofstream metrics_eval;
    std::ofstream reflection;
    std::ofstream events;
};

void write_manifest(const std::filesystem::path& run_dir, const std::string& status,
                    std::uint64_t seed, const std::string& started_at,
                    const std::string& error = {}) {
    ordered_json j;
    j["status"] = status;
    j["seed"] = seed;
    j["started_at"] = started_at;
    if (status != "running") j["finished_at"] = utc_timestamp();
    if (!error.empty()) j["error"] = error;
    write_text_file(run_dir / "MANIFEST.json", j.dump(2) + "\n");
}

}  // namespace

RunResult train(const Dataset& dataset, const TrainConfig& cfg, const GenerationConfig& gen,
                const PipelineOptions& options) {
    cfg.validate();
    gen.validate();
    const Vocabulary& vocab = Vocabulary::standard();

    const int rollout_batch = options.rollout_batch == 0 ? cfg.batch_size : options.rollout_batch;
    if (rollout_batch < cfg.batch_size) {
        throw ConfigError("train: rollout_batch must be at least batch_size");
    }
    const int effective_rollout = rollout_batch / cfg.batch_size * cfg.batch_size;
    if (options.out_dir.empty()) throw ConfigError("train: out_dir is required");

    const auto train_queries = queries_in_split(dataset, Split::Train);
    const auto val_queries = queries_in_split(dataset, Split::Validation);
    const int n_train = static_cast<int>(train_queries.size());
    if (cfg.epochs > 0 && n_train == 0) {
        throw ConfigError("train: no Train-split queries in the dataset");
    }
    for (const Query* q : train_queries) {
        if (q->context.size() != options.dims.context) {
            throw ConfigError("train: policy context dimension does not match the dataset");
        }
    }

    const std::int64_t steps_per_epoch =
        cfg.epochs > 0 ? generation_steps_per_epoch(n_train, rollout_batch) : 0;
    const std::int64_t total_gradient_steps =
        static_cast<std::int64_t>(cfg.epochs) * steps_per_epoch * cfg.updates_per_generation_step();

    const std::filesystem::path run_dir = options.out_dir;
    std::filesystem::create_directories(run_dir / "checkpoints");

    write_text_file(run_dir / "config.json",
                    resolved_config_json(cfg, gen, options, rollout_batch).dump(2) + "\n");
    const std::string started_at = utc_timestamp();
    write_manifest(run_dir, "running", cfg.seed, started_at);

    RunResult result;
    result.run_dir = run_dir;

    PolicyParams params = init_policy(vocab, options.dims, cfg.seed, options.warm_start);
    const PolicySnapshot ref = make_snapshot(params, 0);
    if (options.write_checkpoints) save_policy(params, run_dir / "checkpoints" / "initial.bin");

    RunFiles files;
    files.metrics_train.open(run_dir / "metrics_train.csv");
    files.metrics_eval.open(run_dir / "metrics_eval.csv");
    files.reflection.open(run_dir / "reflection.csv");
    files.events.open(run_dir / "events.jsonl");
    if (!files.metrics_train || !files.metrics_eval || !files.reflection || !files.events) {
        throw ConfigError("train: cannot open metrics files under " + run_dir.string());
    }
    files.metrics_train << metrics_train_csv_header() << "\n" << std::flush;
    files.metrics_eval << metrics_eval_csv_header() << "\n" << std::flush;
    files.reflection << "epoch,generation_step,n,n_ref,n_plus,n_ref_plus\n" << std::flush;

    SamplingEngine engine;
    AdamState opt_state;

    const auto eval_epoch = [&](int epoch) {
        if (!options.evaluate_validation || val_queries.empty()) return;
        for (EvalConfigId config : kAllEvalConfigs) {
            EvalRecord rec;
            rec.epoch = epoch;
            rec.split = Split::Validation;
            rec.config = config;
            rec.accuracy = evaluate_split(params, val_queries, config, vocab, cfg.seed, epoch,
                                          gen.max_tokens);
            result.eval_records.push_back(rec);
            files.metrics_eval << metrics_eval_csv_row(rec) << "\n" << std::flush;
        }
    };

    try {
        eval_epoch(0);  // untrained baseline

        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            result.counters.epoch = epoch;

            std::vector<std::size_t> epoch_order(static_cast<std::size_t>(n_train));
            std::iota(epoch_order.begin(), epoch_order.end(), 0);
            auto epoch_stream = rng::derive_stream(
                {cfg.seed, kEpochSalt, static_cast<std::uint64_t>(epoch)});
            rng::shuffle(epoch_order, epoch_stream);

            long long epoch_correct = 0;
            long long epoch_seen = 0;

            for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
                ++result.counters.generation_steps;
                const std::int64_t gstep = result.counters.generation_steps;

                std::vector<const Query*> selected;
                selected.reserve(static_cast<std::size_t>(effective_rollout));
                for (int j = 0; j < effective_rollout; ++j) {
                    const std::size_t pos =
                        (static_cast<std::size_t>(s) * static_cast<std::size_t>(effective_rollout) +
                         static_cast<std::size_t>(j)) %
                        static_cast<std::size_t>(n_train);
                    selected.push_back(train_queries[epoch_order[pos]]);
                }

                const ModelInputs inputs =
                    step1_prepare(selected, vocab, options.max_prompt_length);
                engine.sync_weights(params, gstep);
                const RolloutBatch batch =
                    step2_collect(engine, params, inputs, gen, cfg.seed, gstep, vocab);
                std::vector<Trajectory> trajs =
                    step3_build_trajectories(batch, params, ref, cfg, vocab, options.lambda_lang);

                ReflectionStats stats;
                double reward_sum = 0.0;
                double len_sum = 0.0;
                long long batch_correct = 0;
                for (std::size_t i = 0; i < trajs.size(); ++i) {
                    const bool correct = trajs[i].reward.accuracy_reward == 1.0;
                    stats.add_counts(count_reflection_words(
                                         vocab.decode(batch.responses[i].tokens)),
                                     correct);
                    reward_sum += trajs[i].reward.total;
                    len_sum += static_cast<double>(trajs[i].response_length);
                    if (correct) ++batch_correct;
                }
                epoch_correct += batch_correct;
                epoch_seen += static_cast<long long>(trajs.size());

                const UpdateDiagnostics diag =
                    step4_update(trajs, params, opt_state, cfg, result.counters,
                                 total_gradient_steps, cfg.seed);

                MetricsRecord row;
                row.epoch = epoch;
                row.generation_step = gstep;
                row.train_accuracy = static_cast<double>(epoch_correct) /
                                     static_cast<double>(epoch_seen);
                row.mean_response_length = len_sum / static_cast<double>(trajs.size());
                row.ratios = reflection_ratios(stats);
                row.word_counts = stats.per_word_counts;
                result.train_records.push_back(row);
                files.metrics_train << metrics_train_csv_row(row) << "\n" << std::flush;
                files.reflection << epoch << ',' << gstep << ',' << stats.n << ','
                                 << stats.n_ref << ',' << stats.n_plus << ','
                                 << stats.n_ref_plus << "\n"
                                 << std::flush;

                ordered_json ev;
                ev["generation_step"] = gstep;
                ev["epoch"] = epoch;
                ev["loss"] = diag.mean_loss;
                ev["mean_ratio"] = diag.mean_ratio;
                ev["clip_fraction"] = diag.clip_fraction;
                ev["kl_loss"] = diag.mean_kl_loss;
                ev["lr"] = diag.last_lr;
                ev["mean_reward"] = reward_sum / static_cast<double>(trajs.size());
                ev["mean_response_length"] = row.mean_response_length;
                ev["batch_accuracy"] = static_cast<double>(batch_correct) /
                                       static_cast<double>(trajs.size());
                files.events << ev.dump() << "\n" << std::flush;
            }

            result.epoch_train_accuracy.push_back(
                static_cast<double>(epoch_correct) / static_cast<double>(epoch_seen));
            eval_epoch(epoch);
        }
    } catch (const std::exception& e) {
        write_manifest(run_dir, "aborted", cfg.seed, started_at, e.what());
        throw;
    }

    if (options.write_checkpoints) save_policy(params, run_dir / "checkpoints" / "final.bin");
    write_manifest(run_dir, "complete", cfg.seed, started_at);
    return result;
}

}  // namespace maye
