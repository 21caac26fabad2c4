// SPDX-License-Identifier: Apache-2.0
#include "maye/evalscheme.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "maye/errors.hpp"
#include "maye/rewards.hpp"
#include "maye/rng.hpp"

namespace maye {

namespace {

constexpr std::uint64_t kEvalSalt = 0x6576616cULL;  // "eval"

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool is_space_char(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

/// Lowercases ASCII letters and collapses every whitespace run to one space,
/// so phrases match across line breaks and casing.
std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space_char(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

long long count_bounded(const std::string& text, std::string_view word) {
    long long count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        const std::size_t end = pos + word.size();
        const bool right_ok = end == text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) {
            ++count;
            pos = end;
        } else {
            ++pos;
        }
    }
    return count;
}

std::optional<double> ratio_or_null(long long num, long long den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

const std::array<std::string_view, kReflectionWordCount>& reflection_words() {
    static const std::array<std::string_view, kReflectionWordCount> words = {
        "re-check",    "re-evaluate", "re-examine", "re-think",    "recheck",
        "reevaluate",  "reexamine",   "reevaluation", "rethink",   "check again",
        "think again", "try again",   "verify",     "wait",        "yet"};
    return words;
}

std::array<long long, kReflectionWordCount> count_reflection_words(std::string_view text) {
    const std::string norm = normalize(text);
    std::array<long long, kReflectionWordCount> counts{};
    const auto& words = reflection_words();
    for (int w = 0; w < kReflectionWordCount; ++w) {
        counts[static_cast<std::size_t>(w)] = count_bounded(norm, words[static_cast<std::size_t>(w)]);
    }
    return counts;
}

void ReflectionStats::add(std::string_view response_text, bool correct) {
    add_counts(count_reflection_words(response_text), correct);
}

void ReflectionStats::add_counts(const std::array<long long, kReflectionWordCount>& counts,
                                 bool correct) {
    const bool reflective =
        std::any_of(counts.begin(), counts.end(), [](long long c) { return c > 0; });
    ++n;
    if (reflective) ++n_ref;
    if (correct) ++n_plus;
    if (reflective && correct) ++n_ref_plus;
    for (int w = 0; w < kReflectionWordCount; ++w) {
        per_word_counts[static_cast<std::size_t>(w)] += counts[static_cast<std::size_t>(w)];
    }
}

void ReflectionStats::validate() const {
    const bool ok = 0 <= n_ref_plus && n_ref_plus <= std::min(n_ref, n_plus) &&
                    std::max(n_ref, n_plus) <= n &&
                    std::all_of(per_word_counts.begin(), per_word_counts.end(),
                                [](long long c) { return c >= 0; });
    if (!ok) throw ContractViolation("ReflectionStats: counter ordering violated");
}

ReflectionRatios reflection_ratios(const ReflectionStats& s) {
    s.validate();
    ReflectionRatios r;
    r.reflection_ratio = ratio_or_null(s.n_ref, s.n);
    r.reflection_ratio_in_correct_answers = ratio_or_null(s.n_ref_plus, s.n_plus);
    r.reflection_ratio_in_incorrect_answers = ratio_or_null(s.n_ref - s.n_ref_plus, s.n - s.n_plus);
    r.correct_ratio_in_reflection_texts = ratio_or_null(s.n_ref_plus, s.n_ref);
    r.correct_ratio_in_no_reflection_texts = ratio_or_null(s.n_plus - s.n_ref_plus, s.n - s.n_ref);
    return r;
}

std::string to_string(EvalConfigId id) {
    switch (id) {
        case EvalConfigId::Pass8T1: return "pass8_t1";
        case EvalConfigId::Pass1T06: return "pass1_t06";
        default: return "pass1_t001";
    }
}

std::optional<EvalConfigId> eval_config_from_string(std::string_view s) {
    if (s == "pass8_t1") return EvalConfigId::Pass8T1;
    if (s == "pass1_t06") return EvalConfigId::Pass1T06;
    if (s == "pass1_t001") return EvalConfigId::Pass1T001;
    return std::nullopt;
}

int eval_samples(EvalConfigId id) { return id == EvalConfigId::Pass8T1 ? 8 : 1; }

GenerationConfig eval_generation(EvalConfigId id, int max_tokens) {
    GenerationConfig gen;
    gen.max_tokens = max_tokens;
    gen.n_samples = eval_samples(id);
    switch (id) {
        case EvalConfigId::Pass8T1:
            gen.temperature = 1.0;
            gen.top_p = 1.0;
            break;
        case EvalConfigId::Pass1T06:
            gen.temperature = 0.6;
            gen.top_p = 1.0;
            break;
        case EvalConfigId::Pass1T001:
            gen.temperature = 0.01;
            gen.top_p = 0.001;
            break;
    }
    return gen;
}

bool response_correct(const Response& response, const Query& query, const Vocabulary& vocab) {
    return score(response, query, vocab, 0.0).accuracy_reward == 1.0;
}

double pass_at_k(const std::vector<std::vector<Response>>& pools,
                 std::span<const Query* const> queries, int k, const Vocabulary& vocab) {
    if (queries.empty()) throw ConfigError("pass_at_k: empty query set");
    if (pools.size() != queries.size()) {
        throw ContractViolation("pass_at_k: pools and queries misaligned");
    }
    if (k < 1) throw ConfigError("pass_at_k: k must be at least 1");

    long long solved = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& pool = pools[i];
        if (static_cast<int>(pool.size()) < k) {
            throw ContractViolation("pass_at_k: pool smaller than k");
        }
        for (int s = 0; s < k; ++s) {
            if (response_correct(pool[static_cast<std::size_t>(s)], *queries[i], vocab)) {
                ++solved;
                break;
            }
        }
    }
    return static_cast<double>(solved) / static_cast<double>(queries.size());
}

double evaluate_split_with(std::span<const Query* const> queries, int k, const SampleFn& sampler,
                           const Vocabulary& vocab) {
    if (queries.empty()) throw ConfigError("evaluate_split_with: empty query set");
    if (k < 1) throw ConfigError("evaluate_split_with: k must be at least 1");

    long long solved = 0;
    for (const Query* q : queries) {
        for (int s = 0; s < k; ++s) {
            if (response_correct(sampler(*q, s), *q, vocab)) {
                ++solved;
                break;
            }
        }
    }
    return static_cast<double>(solved) / static_cast<double>(queries.size());
}

double evaluate_split(const PolicyParams& params, std::span<const Query* const> queries,
                      EvalConfigId config, const Vocabulary& vocab, std::uint64_t run_seed,
                      int epoch, int max_tokens) {
    const GenerationConfig gen = eval_generation(config, max_tokens);
    const auto config_word = static_cast<std::uint64_t>(config);
    const SampleFn sampler = [&](const Query& q, int sample_index) {
        auto stream = rng::derive_stream({run_seed, kEvalSalt, config_word,
                                          static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(q.id),
                                          static_cast<std::uint64_t>(sample_index)});
        return sample(params, q, gen, stream);
    };
    return evaluate_split_with(queries, eval_samples(config), sampler, vocab);
}

AccuracyTabs accuracy_tabs(std::span<const std::vector<double>> per_run_epoch_accuracies) {
    if (per_run_epoch_accuracies.empty()) throw ConfigError("accuracy_tabs: no runs");
    double mean_sum = 0.0;
    double max_sum = 0.0;
    for (const auto& run : per_run_epoch_accuracies) {
        if (run.empty()) throw ConfigError("accuracy_tabs: run with no epochs");
        double s = 0.0;
        double mx = run.front();
        for (double v : run) {
            s += v;
            mx = std::max(mx, v);
        }
        mean_sum += s / static_cast<double>(run.size());
        max_sum += mx;
    }
    const auto k = static_cast<double>(per_run_epoch_accuracies.size());
    return {mean_sum / k, max_sum / k};
}

RunAggregate aggregate_runs(std::span<const Curve> curves) {
    if (curves.empty()) throw ConfigError("aggregate_runs: no runs");
    for (const Curve& c : curves) {
        if (c.x.size() != c.y.size()) throw ContractViolation("aggregate_runs: ragged curve");
    }

    std::vector<double> grid = curves[0].x;
    const bool same_grid = std::all_of(curves.begin(), curves.end(),
                                       [&](const Curve& c) { return c.x == curves[0].x; });
    if (!same_grid) {
        std::vector<double> common;
        for (double x : curves[0].x) {
            const bool everywhere = std::all_of(curves.begin(), curves.end(), [&](const Curve& c) {
                return std::find(c.x.begin(), c.x.end(), x) != c.x.end();
            });
            if (everywhere) common.push_back(x);
        }
        if (common.empty()) throw ConfigError("aggregate_runs: curves share no x values");
        grid = std::move(common);
    }

    RunAggregate agg;
    agg.x = grid;
    agg.runs = static_cast<int>(curves.size());
    agg.mean.reserve(grid.size());
    agg.stddev.reserve(grid.size());
    const auto k = static_cast<double>(curves.size());
    for (double x : grid) {
        std::vector<double> vals;
        vals.reserve(curves.size());
        for (const Curve& c : curves) {
            const auto it = std::find(c.x.begin(), c.x.end(), x);
            vals.push_back(c.y[static_cast<std::size_t>(it - c.x.begin())]);
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= k;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= k;
        agg.mean.push_back(mean);
        agg.stddev.push_back(std::sqrt(var));
    }
    return agg;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::string word_column(std::string_view word) {
    std::string col = "count_";
    for (char c : word) col.push_back(c == ' ' ? '_' : c);
    return col;
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_double_field(const std::string& s, long line_no, const char* what) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(std::string("bad ") + what + " value \"" + s + "\"", line_no);
    }
    return v;
}

long long parse_int_field(const std::string& s, long line_no, const char* what) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(std::string("bad ") + what + " value \"" + s + "\"", line_no);
    }
    return v;
}

std::optional<double> parse_ratio_cell(const std::string& s, long line_no, const char* what) {
    if (s.empty()) return std::nullopt;
    const double v = parse_double_field(s, line_no, what);
    if (v < 0.0 || v > 1.0) {
        throw ParseError(std::string(what) + " out of [0, 1]: " + s, line_no);
    }
    return v;
}

}  // namespace

std::string metrics_train_csv_header() {
    std::string h =
        "epoch,generation_step,train_acc,mean_len,reflection_ratio,"
        "reflection_ratio_in_correct_answers,reflection_ratio_in_incorrect_answers,"
        "correct_ratio_in_reflection_texts,correct_ratio_in_no_reflection_texts";
    for (const auto& w : reflection_words()) {
        h += ',';
        h += word_column(w);
    }
    return h;
}

std::string metrics_train_csv_row(const MetricsRecord& r) {
    std::string row = std::to_string(r.epoch) + ',' + std::to_string(r.generation_step) + ',' +
                      format_double(r.train_accuracy) + ',' +
                      format_double(r.mean_response_length) + ',' +
                      cell(r.ratios.reflection_ratio) + ',' +
                      cell(r.ratios.reflection_ratio_in_correct_answers) + ',' +
                      cell(r.ratios.reflection_ratio_in_incorrect_answers) + ',' +
                      cell(r.ratios.correct_ratio_in_reflection_texts) + ',' +
                      cell(r.ratios.correct_ratio_in_no_reflection_texts);
    for (long long c : r.word_counts) {
        row += ',';
        row += std::to_string(c);
    }
    return row;
}

void write_metrics_train_csv(const std::filesystem::path& path,
                             std::span<const MetricsRecord> rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_metrics_train_csv: cannot open " + path.string());
    out << metrics_train_csv_header() << "\n";
    for (const MetricsRecord& r : rows) out << metrics_train_csv_row(r) << "\n";
    if (!out) throw ConfigError("write_metrics_train_csv: write failed for " + path.string());
}

std::vector<MetricsRecord> read_metrics_train_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_metrics_train_csv: cannot open " + path.string());

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty metrics file", 1);
    ++line_no;
    if (line != metrics_train_csv_header()) throw ParseError("unexpected metrics_train header", 1);

    std::vector<MetricsRecord> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 9 + kReflectionWordCount) {
            throw ParseError("wrong column count", line_no);
        }
        MetricsRecord r;
        r.epoch = static_cast<int>(parse_int_field(f[0], line_no, "epoch"));
        r.generation_step = parse_int_field(f[1], line_no, "generation_step");
        r.train_accuracy = parse_double_field(f[2], line_no, "train_acc");
        if (r.train_accuracy < 0.0 || r.train_accuracy > 1.0) {
            throw ParseError("train_acc out of [0, 1]: " + f[2], line_no);
        }
        r.mean_response_length = parse_double_field(f[3], line_no, "mean_len");
        if (r.mean_response_length < 0.0) {
            throw ParseError("mean_len negative: " + f[3], line_no);
        }
        r.ratios.reflection_ratio = parse_ratio_cell(f[4], line_no, "reflection_ratio");
        r.ratios.reflection_ratio_in_correct_answers =
            parse_ratio_cell(f[5], line_no, "reflection_ratio_in_correct_answers");
        r.ratios.reflection_ratio_in_incorrect_answers =
            parse_ratio_cell(f[6], line_no, "reflection_ratio_in_incorrect_answers");
        r.ratios.correct_ratio_in_reflection_texts =
            parse_ratio_cell(f[7], line_no, "correct_ratio_in_reflection_texts");
        r.ratios.correct_ratio_in_no_reflection_texts =
            parse_ratio_cell(f[8], line_no, "correct_ratio_in_no_reflection_texts");
        for (int w = 0; w < kReflectionWordCount; ++w) {
            const long long c = parse_int_field(f[static_cast<std::size_t>(9 + w)], line_no, "word count");
            if (c < 0) throw ParseError("negative word count", line_no);
            r.word_counts[static_cast<std::size_t>(w)] = c;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string metrics_eval_csv_header() { return "epoch,split,config_id,accuracy"; }

std::string metrics_eval_csv_row(const EvalRecord& r) {
    return std::to_string(r.epoch) + ',' + to_string(r.split) + ',' + to_string(r.config) + ',' +
           format_double(r.accuracy);
}

void write_metrics_eval_csv(const std::filesystem::path& path, std::span<const EvalRecord> rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_metrics_eval_csv: cannot open " + path.string());
    out << metrics_eval_csv_header() << "\n";
    for (const EvalRecord& r : rows) out << metrics_eval_csv_row(r) << "\n";
    if (!out) throw ConfigError("write_metrics_eval_csv: write failed for " + path.string());
}

std::vector<EvalRecord> read_metrics_eval_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_metrics_eval_csv: cannot open " + path.string());

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty metrics file", 1);
    ++line_no;
    if (line != metrics_eval_csv_header()) {
        throw ParseError("unexpected metrics_eval header", 1);
    }

    std::vector<EvalRecord> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw ParseError("wrong column count", line_no);
        EvalRecord r;
        r.epoch = static_cast<int>(parse_int_field(f[0], line_no, "epoch"));
        if (f[1] == "train") {
            r.split = Split::Train;
        } else if (f[1] == "val") {
            r.split = Split::Validation;
        } else if (f[1] == "test") {
            r.split = Split::Test;
        } else {
            throw ParseError("unknown split \"" + f[1] + "\"", line_no);
        }
        const auto cfg = eval_config_from_string(f[2]);
        if (!cfg) throw ParseError("unknown config_id \"" + f[2] + "\"", line_no);
        r.config = *cfg;
        r.accuracy = parse_double_field(f[3], line_no, "accuracy");
        if (r.accuracy < 0.0 || r.accuracy > 1.0) {
            throw ParseError("accuracy out of [0, 1]: " + f[3], line_no);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace maye
