// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maye/errors.hpp"
#include "maye/evalscheme.hpp"
#include "maye/rng.hpp"
#include "maye/taskgen.hpp"
#include "maye/vocab.hpp"

using namespace maye;

namespace {

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

int word_index(std::string_view word) {
    const auto& words = reflection_words();
    for (int i = 0; i < kReflectionWordCount; ++i) {
        if (words[static_cast<std::size_t>(i)] == word) return i;
    }
    return -1;
}

long long total_count(const std::array<long long, kReflectionWordCount>& counts) {
    long long t = 0;
    for (long long c : counts) t += c;
    return t;
}

Query gold_query(long long id, int gold) {
    Query q;
    q.id = id;
    q.gold_answer = gold;
    return q;
}

Response text_response(const std::string& text, const Vocabulary& vocab) {
    Response r;
    r.tokens = vocab.encode(text);
    r.finished = true;
    return r;
}

// A present ratio equals exact_numerator / denominator in double arithmetic,
// so rounding llround(ratio * denominator) recovers the integer numerator as
// long as the counters stay well below 2^52. An absent ratio contributes a
// zero numerator (its denominator is zero).
long long recovered_numerator(const std::optional<double>& ratio, long long denominator) {
    if (!ratio.has_value()) return 0;
    return std::llround(*ratio * static_cast<double>(denominator));
}

}  // namespace

TEST_CASE("reflection word list is fixed and phrase entries keep single spaces") {
    const auto& words = reflection_words();
    CHECK(words.size() == kReflectionWordCount);
    CHECK(word_index("verify") >= 0);
    CHECK(word_index("wait") >= 0);
    CHECK(word_index("yet") >= 0);
    CHECK(word_index("check again") >= 0);
    CHECK(word_index("re-check") >= 0);
    for (const auto w : words) {
        CHECK(!w.empty());
        CHECK(w.find("  ") == std::string_view::npos);
        for (char c : w) CHECK((std::islower(static_cast<unsigned char>(c)) || c == '-' || c == ' '));
    }
}

TEST_CASE("count_reflection_words matches case-insensitively on token boundaries") {
    auto counts = count_reflection_words("Verify the sum, then verify it again.");
    CHECK(counts[static_cast<std::size_t>(word_index("verify"))] == 2);

    counts = count_reflection_words("wait... WAIT!");
    CHECK(counts[static_cast<std::size_t>(word_index("wait"))] == 2);

    // Embedded in a longer alphanumeric run: no match.
    counts = count_reflection_words("awaits verify7 yeti");
    CHECK(total_count(counts) == 0);

    // Hyphen is a boundary, so the hyphenated entries match their own surface
    // but the fused spellings do not match across the hyphen.
    counts = count_reflection_words("please re-check the result");
    CHECK(counts[static_cast<std::size_t>(word_index("re-check"))] == 1);
    CHECK(counts[static_cast<std::size_t>(word_index("recheck"))] == 0);

    counts = count_reflection_words("recheck everything");
    CHECK(counts[static_cast<std::size_t>(word_index("recheck"))] == 1);
    CHECK(counts[static_cast<std::size_t>(word_index("re-check"))] == 0);
}

TEST_CASE("count_reflection_words near-miss corpus stays at zero") {
    const char* negatives[] = {
        "yesterday was quiet",      // shares letters with "yet" but never the word
        "the yeti waved",           // "yet" embedded in "yeti"
        "awaiting results",         // "wait" embedded in "awaiting"
        "verification pending",     // "verify" is not a prefix match
        "check against the table",  // "check again" needs the full second word
        "rethinking it over",       // "rethink" embedded in "rethinking"
    };
    for (const char* text : negatives) {
        CAPTURE(text);
        CHECK(total_count(count_reflection_words(text)) == 0);
    }
    CHECK(total_count(count_reflection_words("")) == 0);
}

TEST_CASE("phrase entries match across arbitrary whitespace runs") {
    const auto idx = static_cast<std::size_t>(word_index("check again"));
    CHECK(count_reflection_words("check again")[idx] == 1);
    CHECK(count_reflection_words("check\nagain")[idx] == 1);
    CHECK(count_reflection_words("check \t  again")[idx] == 1);
    CHECK(count_reflection_words("Check Again")[idx] == 1);
    CHECK(count_reflection_words("checkagain")[idx] == 0);

    // "re-check again" carries both the hyphenated word and the phrase.
    const auto counts = count_reflection_words("re-check again");
    CHECK(counts[static_cast<std::size_t>(word_index("re-check"))] == 1);
    CHECK(counts[idx] == 1);
}

TEST_CASE("ReflectionStats::add keeps the four counters consistent") {
    ReflectionStats stats;
    stats.add("the answer is 12", true);              // correct, no reflection
    stats.add("wait, let me verify: 13", false);      // incorrect, reflection
    stats.add("verify once more, it is 12", true);    // correct, reflection
    stats.add("plain wrong", false);                  // incorrect, no reflection

    CHECK(stats.n == 4);
    CHECK(stats.n_ref == 2);
    CHECK(stats.n_plus == 2);
    CHECK(stats.n_ref_plus == 1);
    CHECK(stats.per_word_counts[static_cast<std::size_t>(word_index("verify"))] == 2);
    CHECK(stats.per_word_counts[static_cast<std::size_t>(word_index("wait"))] == 1);
    CHECK_NOTHROW(stats.validate());

    const auto ratios = reflection_ratios(stats);
    REQUIRE(ratios.reflection_ratio.has_value());
    CHECK(*ratios.reflection_ratio == 0.5);
    REQUIRE(ratios.reflection_ratio_in_correct_answers.has_value());
    CHECK(*ratios.reflection_ratio_in_correct_answers == 0.5);
    REQUIRE(ratios.reflection_ratio_in_incorrect_answers.has_value());
    CHECK(*ratios.reflection_ratio_in_incorrect_answers == 0.5);
    REQUIRE(ratios.correct_ratio_in_reflection_texts.has_value());
    CHECK(*ratios.correct_ratio_in_reflection_texts == 0.5);
    REQUIRE(ratios.correct_ratio_in_no_reflection_texts.has_value());
    CHECK(*ratios.correct_ratio_in_no_reflection_texts == 0.5);
}

TEST_CASE("reflection ratios are absent exactly when their denominator is zero") {
    ReflectionStats empty;
    auto ratios = reflection_ratios(empty);
    CHECK(!ratios.reflection_ratio.has_value());
    CHECK(!ratios.reflection_ratio_in_correct_answers.has_value());
    CHECK(!ratios.reflection_ratio_in_incorrect_answers.has_value());
    CHECK(!ratios.correct_ratio_in_reflection_texts.has_value());
    CHECK(!ratios.correct_ratio_in_no_reflection_texts.has_value());

    ReflectionStats all_correct_reflective;
    all_correct_reflective.add("wait: 4", true);
    all_correct_reflective.add("verify 4", true);
    ratios = reflection_ratios(all_correct_reflective);
    REQUIRE(ratios.reflection_ratio.has_value());
    CHECK(*ratios.reflection_ratio == 1.0);
    CHECK(!ratios.reflection_ratio_in_incorrect_answers.has_value());  // no incorrect answers
    CHECK(!ratios.correct_ratio_in_no_reflection_texts.has_value());   // no plain texts
}

TEST_CASE("ReflectionStats::validate rejects inconsistent counters") {
    ReflectionStats s;
    s.n = 3;
    s.n_ref = 4;  // more reflective responses than responses
    CHECK_THROWS_AS(s.validate(), ContractViolation);

    s = ReflectionStats{};
    s.n = 5;
    s.n_ref = 2;
    s.n_plus = 1;
    s.n_ref_plus = 2;  // exceeds n_plus
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    CHECK_THROWS_AS((void)reflection_ratios(s), ContractViolation);

    s = ReflectionStats{};
    s.n_ref_plus = -1;
    CHECK_THROWS_AS(s.validate(), ContractViolation);

    s = ReflectionStats{};
    s.n = 2;
    s.per_word_counts[0] = -3;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
}

TEST_CASE("both counter reconstruction identities hold exactly on random batches") {
    rng::Stream stream(0x5265666c65637473ULL);
    for (int batch = 0; batch < 50; ++batch) {
        ReflectionStats stats;
        const int n = static_cast<int>(stream.uniform_int(0, 40));
        for (int i = 0; i < n; ++i) {
            std::array<long long, kReflectionWordCount> counts{};
            if (stream.next_double() < 0.45) {
                const auto w = static_cast<std::size_t>(
                    stream.uniform_int(0, kReflectionWordCount - 1));
                counts[w] = stream.uniform_int(1, 3);
            }
            stats.add_counts(counts, stream.next_double() < 0.4);
        }
        CHECK_NOTHROW(stats.validate());
        const auto ratios = reflection_ratios(stats);

        // Identity 1: reflective counts split by correctness recombine to n_ref.
        const long long ref_in_correct =
            recovered_numerator(ratios.reflection_ratio_in_correct_answers, stats.n_plus);
        const long long ref_in_incorrect = recovered_numerator(
            ratios.reflection_ratio_in_incorrect_answers, stats.n - stats.n_plus);
        CHECK(ref_in_correct + ref_in_incorrect == stats.n_ref);

        // Identity 2: correct counts split by reflectivity recombine to n_plus.
        const long long correct_in_ref =
            recovered_numerator(ratios.correct_ratio_in_reflection_texts, stats.n_ref);
        const long long correct_in_noref = recovered_numerator(
            ratios.correct_ratio_in_no_reflection_texts, stats.n - stats.n_ref);
        CHECK(correct_in_ref + correct_in_noref == stats.n_plus);

        // Each present ratio is the plain double quotient of its counters.
        if (ratios.reflection_ratio.has_value()) {
            CHECK(*ratios.reflection_ratio ==
                  static_cast<double>(stats.n_ref) / static_cast<double>(stats.n));
        }
        if (ratios.reflection_ratio_in_correct_answers.has_value()) {
            CHECK(*ratios.reflection_ratio_in_correct_answers ==
                  static_cast<double>(stats.n_ref_plus) / static_cast<double>(stats.n_plus));
        }
    }
}

TEST_CASE("eval configurations carry the standardized names and settings") {
    CHECK(to_string(EvalConfigId::Pass8T1) == "pass8_t1");
    CHECK(to_string(EvalConfigId::Pass1T06) == "pass1_t06");
    CHECK(to_string(EvalConfigId::Pass1T001) == "pass1_t001");
    for (EvalConfigId id : kAllEvalConfigs) {
        CHECK(eval_config_from_string(to_string(id)) == id);
    }
    CHECK(!eval_config_from_string("pass2_t1").has_value());

    CHECK(eval_samples(EvalConfigId::Pass8T1) == 8);
    CHECK(eval_samples(EvalConfigId::Pass1T06) == 1);
    CHECK(eval_samples(EvalConfigId::Pass1T001) == 1);

    const auto g1 = eval_generation(EvalConfigId::Pass8T1, 32);
    CHECK(g1.temperature == 1.0);
    CHECK(g1.top_p == 1.0);
    CHECK(g1.max_tokens == 32);
    const auto g2 = eval_generation(EvalConfigId::Pass1T06, 32);
    CHECK(g2.temperature == 0.6);
    const auto g3 = eval_generation(EvalConfigId::Pass1T001, 32);
    CHECK(g3.temperature == 0.01);
    CHECK(g3.top_p == 0.001);
}

TEST_CASE("pass_at_k counts a query solved only within the first k samples") {
    const auto& vocab = Vocabulary::standard();
    const Query q0 = gold_query(0, 7);
    const Query q1 = gold_query(1, 30);
    const std::vector<const Query*> queries = {&q0, &q1};

    const Response right0 = text_response("\\boxed{7}", vocab);
    const Response wrong0 = text_response("\\boxed{8}", vocab);
    const Response right1 = text_response("\\boxed{30}", vocab);
    const Response wrong1 = text_response(" so we get\\boxed{29}", vocab);

    // q0 first succeeds at sample index 2, q1 at index 0.
    std::vector<std::vector<Response>> pools = {{wrong0, wrong0, right0, wrong0},
                                                {right1, wrong1, wrong1, wrong1}};
    CHECK(pass_at_k(pools, queries, 1, vocab) == 0.5);
    CHECK(pass_at_k(pools, queries, 2, vocab) == 0.5);
    CHECK(pass_at_k(pools, queries, 3, vocab) == 1.0);
    CHECK(pass_at_k(pools, queries, 4, vocab) == 1.0);
}

TEST_CASE("pass_at_k is monotone in k on randomized pools") {
    const auto& vocab = Vocabulary::standard();
    rng::Stream stream(0x70617373406bULL);
    std::vector<Query> queries;
    std::vector<std::vector<Response>> pools;
    for (int i = 0; i < 24; ++i) {
        queries.push_back(gold_query(i, static_cast<int>(stream.uniform_int(0, 99))));
        std::vector<Response> pool;
        for (int s = 0; s < 8; ++s) {
            const int guess = static_cast<int>(stream.uniform_int(0, 99));
            pool.push_back(text_response("\\boxed{" + std::to_string(guess) + "}", vocab));
        }
        pools.push_back(std::move(pool));
    }
    std::vector<const Query*> ptrs;
    for (const auto& q : queries) ptrs.push_back(&q);

    double prev = 0.0;
    for (int k = 1; k <= 8; ++k) {
        const double acc = pass_at_k(pools, ptrs, k, vocab);
        CHECK(acc >= prev);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        prev = acc;
    }
}

TEST_CASE("pass_at_k input validation") {
    const auto& vocab = Vocabulary::standard();
    const Query q = gold_query(0, 5);
    const std::vector<const Query*> one = {&q};
    const std::vector<const Query*> none;
    std::vector<std::vector<Response>> pools(1);
    pools[0].push_back(text_response("\\boxed{5}", vocab));

    CHECK_THROWS_AS((void)pass_at_k(pools, none, 1, vocab), ConfigError);
    CHECK_THROWS_AS((void)pass_at_k(pools, one, 0, vocab), ConfigError);
    CHECK_THROWS_AS((void)pass_at_k(pools, one, 2, vocab), ContractViolation);
    CHECK_THROWS_AS((void)pass_at_k({}, one, 1, vocab), ContractViolation);
    CHECK(pass_at_k(pools, one, 1, vocab) == 1.0);
}

TEST_CASE("evaluate_split_with draws lazily and matches the pooled computation") {
    const auto& vocab = Vocabulary::standard();
    std::vector<Query> queries;
    for (int i = 0; i < 10; ++i) queries.push_back(gold_query(i, i));
    std::vector<const Query*> ptrs;
    for (const auto& q : queries) ptrs.push_back(&q);

    // Correct exactly on even query ids, at sample index 1.
    int calls = 0;
    const SampleFn sampler = [&](const Query& q, int sample_index) {
        ++calls;
        const bool hit = (q.gold_answer % 2 == 0) && sample_index == 1;
        return text_response(hit ? "\\boxed{" + std::to_string(q.gold_answer) + "}" : "\\boxed{777}",
                             vocab);
    };
    CHECK(evaluate_split_with(ptrs, 4, sampler, vocab) == 0.5);
    // Solved queries stop after their first hit: 2 draws each for the five
    // even ids, 4 draws each for the five odd ids.
    CHECK(calls == 5 * 2 + 5 * 4);

    CHECK_THROWS_AS((void)evaluate_split_with({}, 1, sampler, vocab), ConfigError);
    CHECK_THROWS_AS((void)evaluate_split_with(ptrs, 0, sampler, vocab), ConfigError);
}

TEST_CASE("evaluate_split is deterministic and independent of query order") {
    const auto& vocab = Vocabulary::standard();
    DatasetSpec spec;
    spec.n_train = 12;
    spec.n_val = 4;
    spec.n_test = 4;
    spec.dominance_mix = 1.0;
    spec.seed = 11;
    const Dataset ds = generate_dataset(spec, vocab);
    const auto queries = queries_in_split(ds, Split::Train);

    PolicyDims dims;
    dims.embed = 8;
    dims.hidden = 16;
    const PolicyParams params = init_policy(vocab, dims, 5, false);

    const double a = evaluate_split(params, queries, EvalConfigId::Pass8T1, vocab, 17, 3, 8);
    const double b = evaluate_split(params, queries, EvalConfigId::Pass8T1, vocab, 17, 3, 8);
    CHECK(a == b);

    std::vector<const Query*> reversed(queries.rbegin(), queries.rend());
    CHECK(evaluate_split(params, reversed, EvalConfigId::Pass8T1, vocab, 17, 3, 8) == a);

    // Different seed or epoch re-keys sampling for the stochastic configs.
    CHECK_THROWS_AS((void)evaluate_split(params, {}, EvalConfigId::Pass8T1, vocab, 17, 3, 8),
                    ConfigError);

    // The greedy configuration consumes no randomness at all.
    const double g1 = evaluate_split(params, queries, EvalConfigId::Pass1T001, vocab, 17, 3, 8);
    const double g2 = evaluate_split(params, queries, EvalConfigId::Pass1T001, vocab, 99, 8, 8);
    CHECK(g1 == g2);
}

TEST_CASE("accuracy_tabs averages per-run means and maxima") {
    const std::vector<std::vector<double>> one = {{0.2, 0.4}};
    auto tabs = accuracy_tabs(one);
    CHECK(tabs.mean_of_epoch_means == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(tabs.mean_of_run_maxima == 0.4);

    const std::vector<std::vector<double>> two = {{0.2, 0.4}, {0.6, 0.0}};
    tabs = accuracy_tabs(two);
    CHECK(tabs.mean_of_epoch_means == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(tabs.mean_of_run_maxima == 0.5);

    CHECK_THROWS_AS((void)accuracy_tabs({}), ConfigError);
    const std::vector<std::vector<double>> with_empty = {{0.2}, {}};
    CHECK_THROWS_AS((void)accuracy_tabs(with_empty), ConfigError);
}

TEST_CASE("aggregate_runs computes pointwise mean and population stddev") {
    const std::vector<Curve> curves = {{{1, 2, 3}, {1, 1, 1}}, {{1, 2, 3}, {3, 3, 3}}};
    const auto agg = aggregate_runs(curves);
    CHECK(agg.runs == 2);
    REQUIRE(agg.x == std::vector<double>{1, 2, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(agg.mean[i] == 2.0);
        CHECK(agg.stddev[i] == 1.0);
    }

    const std::vector<Curve> single = {{{1, 2}, {0.25, 0.75}}};
    const auto solo = aggregate_runs(single);
    CHECK(solo.runs == 1);
    CHECK(solo.mean == std::vector<double>{0.25, 0.75});
    CHECK(solo.stddev == std::vector<double>{0.0, 0.0});
}

TEST_CASE("aggregate_runs restricts mismatched grids to their common x values") {
    const std::vector<Curve> curves = {{{1, 2, 3}, {10, 20, 30}}, {{2, 3, 4}, {200, 300, 400}}};
    const auto agg = aggregate_runs(curves);
    REQUIRE(agg.x == std::vector<double>{2, 3});
    CHECK(agg.mean[0] == (20.0 + 200.0) / 2);
    CHECK(agg.mean[1] == (30.0 + 300.0) / 2);

    const std::vector<Curve> disjoint = {{{1}, {1}}, {{2}, {2}}};
    CHECK_THROWS_AS((void)aggregate_runs(disjoint), ConfigError);

    const std::vector<Curve> ragged = {{{1, 2}, {1}}};
    CHECK_THROWS_AS((void)aggregate_runs(ragged), ContractViolation);
    CHECK_THROWS_AS((void)aggregate_runs({}), ConfigError);
}

TEST_CASE("metrics_train csv round-trips bit-for-bit including absent ratios") {
    ReflectionStats s;
    s.add("wait, the total is 12, verify it", true);
    s.add("just 9", false);
    s.add("check again: 3", false);

    MetricsRecord full;
    full.epoch = 2;
    full.generation_step = 17;
    full.train_accuracy = 1.0 / 3.0;
    full.mean_response_length = 12.625;
    full.ratios = reflection_ratios(s);
    full.word_counts = s.per_word_counts;

    MetricsRecord empty;  // epoch 0 placeholder: every denominator is zero
    empty.epoch = 1;
    empty.generation_step = 1;
    empty.train_accuracy = 0.0;
    empty.mean_response_length = 0.0;
    empty.ratios = reflection_ratios(ReflectionStats{});

    const std::vector<MetricsRecord> rows = {empty, full};
    const auto path = temp_path("maye_test_metrics_train.csv");
    write_metrics_train_csv(path, rows);
    const auto back = read_metrics_train_csv(path);

    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].epoch == rows[i].epoch);
        CHECK(back[i].generation_step == rows[i].generation_step);
        CHECK(back[i].train_accuracy == rows[i].train_accuracy);
        CHECK(back[i].mean_response_length == rows[i].mean_response_length);
        CHECK(back[i].ratios.reflection_ratio == rows[i].ratios.reflection_ratio);
        CHECK(back[i].ratios.reflection_ratio_in_correct_answers ==
              rows[i].ratios.reflection_ratio_in_correct_answers);
        CHECK(back[i].ratios.reflection_ratio_in_incorrect_answers ==
              rows[i].ratios.reflection_ratio_in_incorrect_answers);
        CHECK(back[i].ratios.correct_ratio_in_reflection_texts ==
              rows[i].ratios.correct_ratio_in_reflection_texts);
        CHECK(back[i].ratios.correct_ratio_in_no_reflection_texts ==
              rows[i].ratios.correct_ratio_in_no_reflection_texts);
        CHECK(back[i].word_counts == rows[i].word_counts);
    }

    // Writing the same rows again yields byte-identical files.
    const auto path2 = temp_path("maye_test_metrics_train2.csv");
    write_metrics_train_csv(path2, rows);
    std::ifstream f1(path), f2(path2);
    const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    CHECK(!c1.empty());
}

TEST_CASE("metrics_train csv reader rejects tampered headers and out-of-range values") {
    const auto path = temp_path("maye_test_metrics_train_bad.csv");
    const std::string header = metrics_train_csv_header();

    auto write_file = [&](const std::string& text) {
        std::ofstream out(path, std::ios::trunc);
        out << text;
    };

    MetricsRecord r;
    r.epoch = 1;
    r.generation_step = 1;
    r.train_accuracy = 0.5;
    r.mean_response_length = 3.0;
    r.ratios = reflection_ratios(ReflectionStats{});
    const std::string row = metrics_train_csv_row(r);

    write_file("epoch,generation_step\n" + row + "\n");
    CHECK_THROWS_AS((void)read_metrics_train_csv(path), ParseError);

    write_file(header + ",extra\n" + row + "\n");
    CHECK_THROWS_AS((void)read_metrics_train_csv(path), ParseError);

    // train_accuracy outside [0, 1].
    std::string bad_acc = row;
    bad_acc.replace(bad_acc.find(",0.5,"), 5, ",1.5,");
    write_file(header + "\n" + bad_acc + "\n");
    CHECK_THROWS_AS((void)read_metrics_train_csv(path), ParseError);

    // Truncated row (too few columns).
    write_file(header + "\n1,1,0.5\n");
    CHECK_THROWS_AS((void)read_metrics_train_csv(path), ParseError);

    // Negative word count.
    std::string neg = row;
    neg.replace(neg.rfind(",0"), 2, ",-2");
    write_file(header + "\n" + neg + "\n");
    CHECK_THROWS_AS((void)read_metrics_train_csv(path), ParseError);

    CHECK_THROWS_AS((void)read_metrics_train_csv(temp_path("maye_no_such_metrics.csv")),
                    ParseError);

    // The untouched row still parses.
    write_file(header + "\n" + row + "\n");
    CHECK(read_metrics_train_csv(path).size() == 1);
}

TEST_CASE("metrics_eval csv round-trips and validates its fields") {
    std::vector<EvalRecord> rows;
    for (int epoch : {0, 1}) {
        for (EvalConfigId cfg : kAllEvalConfigs) {
            EvalRecord r;
            r.epoch = epoch;
            r.split = epoch == 0 ? Split::Validation : Split::Test;
            r.config = cfg;
            r.accuracy = 0.125 * (epoch + 1);
            rows.push_back(r);
        }
    }
    const auto path = temp_path("maye_test_metrics_eval.csv");
    write_metrics_eval_csv(path, rows);
    const auto back = read_metrics_eval_csv(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].epoch == rows[i].epoch);
        CHECK(back[i].split == rows[i].split);
        CHECK(back[i].config == rows[i].config);
        CHECK(back[i].accuracy == rows[i].accuracy);
    }

    auto write_file = [&](const std::string& text) {
        std::ofstream out(path, std::ios::trunc);
        out << text;
    };
    const std::string header = metrics_eval_csv_header();
    write_file(header + "\n0,val,pass8_t1,1.25\n");
    CHECK_THROWS_AS((void)read_metrics_eval_csv(path), ParseError);
    write_file(header + "\n0,val,pass5_t1,0.5\n");
    CHECK_THROWS_AS((void)read_metrics_eval_csv(path), ParseError);
    write_file(header + "\n0,holdout,pass8_t1,0.5\n");
    CHECK_THROWS_AS((void)read_metrics_eval_csv(path), ParseError);
    write_file("epoch,split\n");
    CHECK_THROWS_AS((void)read_metrics_eval_csv(path), ParseError);
}

TEST_CASE("format_double output survives a strtod round trip bit-for-bit") {
    const double specials[] = {0.0,      1.0,    -1.0,       0.1,       1.0 / 3.0,
                               0.3,      1e-300, 1e300,      -2.5e-17,  6.02214076e23,
                               0.999999, 1e-17,  0.49999999, 12345.678, 2.0 / 3.0};
    for (double v : specials) {
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    rng::Stream stream(0x666d7464626cULL);
    for (int i = 0; i < 500; ++i) {
        const double v = (stream.next_double() - 0.5) * std::pow(10.0, stream.uniform(-20, 20));
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
}
