// SPDX-License-Identifier: Apache-2.0
#include "maye/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "maye/config.hpp"
#include "maye/errors.hpp"
#include "maye/evalscheme.hpp"
#include "maye/pipeline.hpp"
#include "maye/policy.hpp"
#include "maye/report.hpp"
#include "maye/taskgen.hpp"

namespace maye {

namespace {

namespace fs = std::filesystem;

std::optional<std::string> env_out_root() {
    if (const char* v = std::getenv("MAYE_OUT"); v != nullptr && *v != '\0') {
        return std::string(v);
    }
    return std::nullopt;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        if (item.empty()) throw ConfigError("--seeds: empty entry in '" + text + "'");
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            seeds.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("--seeds: '" + item + "' is not a seed");
        }
        pos = comma + 1;
        if (comma == text.size()) break;
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (std::size_t j = i + 1; j < seeds.size(); ++j) {
            if (seeds[i] == seeds[j]) {
                throw ConfigError("--seeds: duplicate seed " + std::to_string(seeds[i]));
            }
        }
    }
    return seeds;
}

struct GenFlags {
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;
    double dominance_mix = 1.0;
    int answer_lo = 0;
    int answer_hi = 99;
    std::uint64_t seed = 1;
    std::string out;
};

int run_gen(const GenFlags& f) {
    if (f.n_train < 0) throw ConfigError("--train must be >= 0");
    if (f.n_val < 0) throw ConfigError("--val must be >= 0");
    if (f.n_test < 0) throw ConfigError("--test must be >= 0");
    if (!(f.dominance_mix >= 0.0 && f.dominance_mix <= 1.0)) {
        throw ConfigError("--dominance-mix must be in [0, 1]");
    }
    if (f.answer_lo > f.answer_hi) {
        throw ConfigError("--answer-lo must not exceed --answer-hi");
    }
    if (f.answer_lo < 0) throw ConfigError("--answer-lo must be >= 0");
    if (f.answer_hi > 99) throw ConfigError("--answer-hi must be <= 99");

    DatasetSpec spec;
    spec.n_train = f.n_train;
    spec.n_val = f.n_val;
    spec.n_test = f.n_test;
    spec.dominance_mix = f.dominance_mix;
    spec.answer_lo = f.answer_lo;
    spec.answer_hi = f.answer_hi;
    spec.seed = f.seed;

    const Vocabulary& vocab = Vocabulary::standard();
    const Dataset ds = generate_dataset(spec, vocab);
    write_dataset(ds, f.out, vocab);
    std::cout << "wrote " << ds.queries.size() << " queries (" << ds.split_sizes.train
              << " train / " << ds.split_sizes.val << " val / " << ds.split_sizes.test
              << " test) to " << f.out << "\n";
    return 0;
}

struct TrainFlags {
    std::string config;
    std::string seeds;
    std::string out;
    int jobs = 1;
};

int run_train(const TrainFlags& f) {
    RunConfig rc = load_run_config(f.config);
    if (!f.seeds.empty()) rc.seeds = parse_seed_list(f.seeds);
    if (!f.out.empty()) rc.out_dir = f.out;
    if (const auto env = env_out_root()) rc.out_dir = *env;
    if (f.jobs < 1) throw ConfigError("--jobs must be >= 1");

    rc.train.validate();
    rc.generation.validate();
    if (rc.dataset_path.empty()) throw ConfigError("config: dataset path is required");

    const Vocabulary& vocab = Vocabulary::standard();
    const Dataset dataset = read_dataset(rc.dataset_path, vocab);

    const fs::path out_root = rc.out_dir;
    std::vector<std::string> lines(rc.seeds.size());

    const auto run_one = [&](std::size_t i) {
        const std::uint64_t seed = rc.seeds[i];
        TrainConfig cfg = rc.train;
        cfg.seed = seed;
        const fs::path run_dir = out_root / ("seed_" + std::to_string(seed));
        const RunResult res = train(dataset, cfg, rc.generation, pipeline_options(rc, run_dir));
        lines[i] = "seed " + std::to_string(seed) + ": " + std::to_string(res.counters.epoch) +
                   " epochs, " + std::to_string(res.counters.generation_steps) +
                   " generation steps, " + std::to_string(res.counters.gradient_steps) +
                   " gradient steps -> " + res.run_dir.string();
    };

    if (f.jobs == 1 || rc.seeds.size() == 1) {
        for (std::size_t i = 0; i < rc.seeds.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex error_mutex;
        const std::size_t workers =
            std::min<std::size_t>(static_cast<std::size_t>(f.jobs), rc.seeds.size());
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < rc.seeds.size();
                     i = next.fetch_add(1)) {
                    try {
                        run_one(i);
                    } catch (...) {
                        const std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                    }
                }
            });
        }
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    for (const std::string& line : lines) std::cout << line << "\n";
    return 0;
}

struct EvalFlags {
    std::string checkpoint;
    std::string data;
    std::string split = "val";
    std::string config = "all";
    std::uint64_t seed = 1;
    int epoch = 0;
    int max_tokens = 64;
};

int run_eval(const EvalFlags& f) {
    Split split = Split::Validation;
    if (f.split == "train") {
        split = Split::Train;
    } else if (f.split == "val") {
        split = Split::Validation;
    } else if (f.split == "test") {
        split = Split::Test;
    } else {
        throw ConfigError("--split: expected train, val or test, got '" + f.split + "'");
    }

    std::vector<EvalConfigId> configs;
    if (f.config == "all") {
        configs.assign(kAllEvalConfigs.begin(), kAllEvalConfigs.end());
    } else if (const auto id = eval_config_from_string(f.config)) {
        configs.push_back(*id);
    } else {
        throw ConfigError("--config: expected pass8_t1, pass1_t06, pass1_t001 or all, got '" +
                          f.config + "'");
    }

    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams params = load_policy(f.checkpoint);
    const Dataset dataset = read_dataset(f.data, vocab);
    const auto queries = queries_in_split(dataset, split);

    for (EvalConfigId config : configs) {
        const double acc =
            evaluate_split(params, queries, config, vocab, f.seed, f.epoch, f.max_tokens);
        std::cout << to_string(config) << " " << format_double(acc) << "\n";
    }
    return 0;
}

struct ReportFlags {
    std::string runs;
    std::string out;
};

int run_report(const ReportFlags& f) {
    std::string runs_root = f.runs;
    if (runs_root.empty()) runs_root = env_out_root().value_or("runs");
    const fs::path out_dir = f.out.empty() ? fs::path(runs_root) / "report" : fs::path(f.out);

    const auto dirs = discover_run_dirs(runs_root);
    if (dirs.empty()) {
        throw ConfigError("report: no completed run directories under " + runs_root);
    }
    const ReportResult res = write_report(dirs, out_dir);
    std::cout << "aggregated " << res.runs << " runs\n";
    std::cout << "wrote " << res.aggregate_csv.string() << "\n";
    std::cout << "wrote " << res.tabs_csv.string() << "\n";
    for (const fs::path& svg : res.svg_files) std::cout << "wrote " << svg.string() << "\n";
    return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
    CLI::App app{"RL post-training engine for autoregressive token policies"};
    app.name("maye");
    app.require_subcommand(1);

    GenFlags gen_flags;
    CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic verifiable-task dataset");
    gen->add_option("--train", gen_flags.n_train, "Train-split query count");
    gen->add_option("--val", gen_flags.n_val, "Validation-split query count");
    gen->add_option("--test", gen_flags.n_test, "Test-split query count");
    gen->add_option("--dominance-mix", gen_flags.dominance_mix,
                    "Fraction of text-dominant queries");
    gen->add_option("--answer-lo", gen_flags.answer_lo, "Smallest gold answer");
    gen->add_option("--answer-hi", gen_flags.answer_hi, "Largest gold answer");
    gen->add_option("--seed", gen_flags.seed, "Generation seed");
    gen->add_option("-o,--out", gen_flags.out, "Output JSONL path")->required();

    TrainFlags train_flags;
    CLI::App* train = app.add_subcommand("train", "Run the four-step RL loop per seed");
    train->add_option("-c,--config", train_flags.config, "JSON config file")->required();
    train->add_option("--seeds", train_flags.seeds, "Comma-separated seed list override");
    train->add_option("-o,--out", train_flags.out, "Output root override");
    train->add_option("--jobs", train_flags.jobs, "Seeds trained in parallel");

    EvalFlags eval_flags;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    eval->add_option("--checkpoint", eval_flags.checkpoint, "Policy checkpoint")->required();
    eval->add_option("--data", eval_flags.data, "Dataset JSONL path")->required();
    eval->add_option("--split", eval_flags.split, "train, val or test");
    eval->add_option("--config", eval_flags.config,
                     "pass8_t1, pass1_t06, pass1_t001 or all");
    eval->add_option("--seed", eval_flags.seed, "Evaluation seed");
    eval->add_option("--epoch", eval_flags.epoch, "Epoch label keyed into the RNG stream");
    eval->add_option("--max-tokens", eval_flags.max_tokens, "Sampling length cap");

    ReportFlags report_flags;
    CLI::App* report = app.add_subcommand("report", "Aggregate completed runs into CSV + SVG");
    report->add_option("--runs", report_flags.runs, "Run root holding seed_<s> directories");
    report->add_option("-o,--out", report_flags.out, "Report output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return run_gen(gen_flags);
        if (train->parsed()) return run_train(train_flags);
        if (eval->parsed()) return run_eval(eval_flags);
        return run_report(report_flags);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace maye
