// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maye/policy.hpp"
#include "maye/taskgen.hpp"
#include "maye/types.hpp"
#include "maye/vocab.hpp"

namespace maye {

inline constexpr int kReflectionWordCount = 15;

/// The curated reflective-word list, fixed order. Multi-word entries are
/// matched as contiguous phrases after whitespace normalization; single words
/// on alphanumeric boundaries. Matching is case-insensitive.
const std::array<std::string_view, kReflectionWordCount>& reflection_words();

/// Occurrence counts per curated word, index-aligned with reflection_words().
std::array<long long, kReflectionWordCount> count_reflection_words(std::string_view text);

/// Batch counters behind the five reflection ratios.
struct ReflectionStats {
    long long n = 0;           // responses in batch
    long long n_ref = 0;       // responses containing >= 1 reflection word
    long long n_plus = 0;      // correct responses
    long long n_ref_plus = 0;  // correct responses containing >= 1 reflection word
    std::array<long long, kReflectionWordCount> per_word_counts{};

    void add(std::string_view response_text, bool correct);
    void add_counts(const std::array<long long, kReflectionWordCount>& counts, bool correct);

    /// Throws ContractViolation if the counter ordering is violated.
    void validate() const;
};

/// Each ratio is absent exactly when its denominator is zero.
struct ReflectionRatios {
    std::optional<double> reflection_ratio;                        // n_ref / n
    std::optional<double> reflection_ratio_in_correct_answers;    // n_ref_plus / n_plus
    std::optional<double> reflection_ratio_in_incorrect_answers;  // (n_ref - n_ref_plus) / (n - n_plus)
    std::optional<double> correct_ratio_in_reflection_texts;      // n_ref_plus / n_ref
    std::optional<double> correct_ratio_in_no_reflection_texts;   // (n_plus - n_ref_plus) / (n - n_ref)
};

ReflectionRatios reflection_ratios(const ReflectionStats& stats);

/// The three standardized generation settings used for validation/test
/// accuracy: 8 samples at temperature 1.0, 1 sample at temperature 0.6, and
/// 1 greedy sample (temperature 0.01, top_p 0.001, fully deterministic).
enum class EvalConfigId { Pass8T1, Pass1T06, Pass1T001 };

inline constexpr std::array<EvalConfigId, 3> kAllEvalConfigs = {
    EvalConfigId::Pass8T1, EvalConfigId::Pass1T06, EvalConfigId::Pass1T001};

std::string to_string(EvalConfigId id);
std::optional<EvalConfigId> eval_config_from_string(std::string_view s);

int eval_samples(EvalConfigId id);  // the k of pass@k
GenerationConfig eval_generation(EvalConfigId id, int max_tokens);

/// True iff the decoded response contains a well-formed boxed span whose
/// content equals the gold answer.
bool response_correct(const Response& response, const Query& query, const Vocabulary& vocab);

using SampleFn = std::function<Response(const Query& query, int sample_index)>;

/// pass@k over per-query sample pools: a query counts as solved when any of
/// the first k pooled samples is correct. pools[i] belongs to queries[i].
double pass_at_k(const std::vector<std::vector<Response>>& pools,
                 std::span<const Query* const> queries, int k, const Vocabulary& vocab);

/// pass@k with samples drawn on demand from an arbitrary sampler.
double evaluate_split_with(std::span<const Query* const> queries, int k, const SampleFn& sampler,
                           const Vocabulary& vocab);

/// pass@k accuracy of the policy on a query set under one of the three
/// standardized configurations. Per-query randomness is derived from
/// (run_seed, config, epoch, query id, sample index), so results do not
/// depend on evaluation order. Throws ConfigError on an empty split.
double evaluate_split(const PolicyParams& params, std::span<const Query* const> queries,
                      EvalConfigId config, const Vocabulary& vocab, std::uint64_t run_seed,
                      int epoch, int max_tokens);

/// Per run: mean over epochs and max over epochs; both averaged across runs.
struct AccuracyTabs {
    double mean_of_epoch_means = 0.0;
    double mean_of_run_maxima = 0.0;
};

AccuracyTabs accuracy_tabs(std::span<const std::vector<double>> per_run_epoch_accuracies);

struct Curve {
    std::vector<double> x;
    std::vector<double> y;
};

/// Pointwise mean and population standard deviation over runs. Curves with
/// differing grids are restricted to their common x values first.
struct RunAggregate {
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> stddev;
    int runs = 0;
};

RunAggregate aggregate_runs(std::span<const Curve> curves);

/// One metrics_train.csv row: one per generation step. train_accuracy is the
/// cumulative correct/seen tally of the current epoch, so the last row of an
/// epoch carries the epoch value.
struct MetricsRecord {
    int epoch = 0;
    std::int64_t generation_step = 0;
    double train_accuracy = 0.0;
    double mean_response_length = 0.0;
    ReflectionRatios ratios;
    std::array<long long, kReflectionWordCount> word_counts{};
};

std::string metrics_train_csv_header();
std::string metrics_train_csv_row(const MetricsRecord& r);
void write_metrics_train_csv(const std::filesystem::path& path,
                             std::span<const MetricsRecord> rows);
std::vector<MetricsRecord> read_metrics_train_csv(const std::filesystem::path& path);

struct EvalRecord {
    int epoch = 0;
    Split split = Split::Validation;
    EvalConfigId config = EvalConfigId::Pass8T1;
    double accuracy = 0.0;
};

std::string metrics_eval_csv_header();
std::string metrics_eval_csv_row(const EvalRecord& r);
void write_metrics_eval_csv(const std::filesystem::path& path, std::span<const EvalRecord> rows);
std::vector<EvalRecord> read_metrics_eval_csv(const std::filesystem::path& path);

/// Shortest-exact decimal rendering used by every CSV writer; strtod of the
/// output reproduces the double bit-for-bit.
std::string format_double(double v);

}  // namespace maye
