// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "maye/taskgen.hpp"
#include "maye/types.hpp"
#include "maye/vocab.hpp"

namespace maye {

inline constexpr double kDefaultLanguagePenalty = 0.5;

/// Per-response reward breakdown. There is no format component: the breakdown
/// is accuracy plus (non-positive) language penalty, nothing else.
struct RewardBreakdown {
    double accuracy_reward = 0.0;  // exactly 0.0 or 1.0
    double language_reward = 0.0;  // <= 0
    double total = 0.0;            // accuracy_reward + language_reward
};

/// Contents of the LAST well-formed "\boxed{...}" span, braces balanced with
/// nesting. Returns nullopt when no such span exists. Total function.
std::optional<std::string> extract_boxed(std::string_view text);

/// True iff `extracted` parses as an integer (optional sign, surrounding
/// whitespace, nothing else) equal to `gold`.
bool verify_answer(const std::optional<std::string>& extracted, long long gold);

/// -lambda_lang if the response contains any designated non-English token,
/// else 0. Presence-gated: multiple markers incur the penalty once.
double language_penalty(const Response& response, const Vocabulary& vocab,
                        double lambda_lang = kDefaultLanguagePenalty);

RewardBreakdown score(const Response& response, const Query& query, const Vocabulary& vocab,
                      double lambda_lang = kDefaultLanguagePenalty);

}  // namespace maye
