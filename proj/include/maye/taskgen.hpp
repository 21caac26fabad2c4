// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maye/vocab.hpp"

namespace maye {

enum class Dominance { TextDominant, VisionDominant };
enum class Split { Train, Validation, Test };

std::string to_string(Dominance d);
std::string to_string(Split s);

/// A verifiable problem instance. `context` always encodes the gold answer;
/// for text-dominant queries the answer digits also appear contiguously in
/// the prompt, for vision-dominant queries they are absent from it.
struct Query {
    std::int64_t id = 0;
    std::vector<int> prompt_tokens;
    Eigen::VectorXd context;
    int gold_answer = 0;
    Dominance dominance = Dominance::TextDominant;
    Split split = Split::Train;
};

bool operator==(const Query& a, const Query& b);

struct SplitSizes {
    int train = 0;
    int val = 0;
    int test = 0;
    int total() const { return train + val + test; }
    bool operator==(const SplitSizes&) const = default;
};

struct DatasetSpec {
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;
    double dominance_mix = 1.0;  // fraction of text-dominant queries
    int answer_lo = 0;
    int answer_hi = 99;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<Query> queries;
    SplitSizes split_sizes;
    std::uint64_t seed = 0;
};

bool operator==(const Dataset& a, const Dataset& b);

/// Deterministic function of the spec. Throws ConfigError on invalid spec.
Dataset generate_dataset(const DatasetSpec& spec, const Vocabulary& vocab);

/// JSONL: header line {seed, vocab_hash, split_sizes}, then one query per line.
void write_dataset(const Dataset& ds, const std::filesystem::path& path, const Vocabulary& vocab);

/// Inverse of write_dataset; validates invariants. Throws ParseError with the
/// offending line number on malformed input.
Dataset read_dataset(const std::filesystem::path& path, const Vocabulary& vocab);

std::vector<const Query*> queries_in_split(const Dataset& ds, Split split);

/// Decimal digit tokens of `answer`, most significant first (no leading zeros).
std::vector<int> answer_digit_tokens(int answer, const Vocabulary& vocab);

/// Shared prompt template: BOS, fixed instruction words, the given digit run,
/// then the prompt terminator. Every generated query uses this skeleton.
std::vector<int> prompt_skeleton(const std::vector<int>& digit_run, const Vocabulary& vocab);

}  // namespace maye
