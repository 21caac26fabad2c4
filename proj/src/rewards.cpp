// SPDX-License-Identifier: Apache-2.0
#include "maye/rewards.hpp"

#include <cctype>
#include <limits>

namespace maye {

namespace {

constexpr std::string_view kBoxOpen = "\\boxed{";

// Attempts to close the span whose opening brace is the last char of a
// kBoxOpen occurrence starting at `start`. Returns the contents on success.
std::optional<std::string> close_span(std::string_view text, std::size_t start) {
    std::size_t i = start + kBoxOpen.size();
    int depth = 1;
    const std::size_t content_begin = i;
    for (; i < text.size(); ++i) {
        if (text[i] == '{') {
            ++depth;
        } else if (text[i] == '}') {
            if (--depth == 0) return std::string(text.substr(content_begin, i - content_begin));
        }
    }
    return std::nullopt;
}

}  // namespace

std::optional<std::string> extract_boxed(std::string_view text) {
    // Scan openings back to front; the first that closes is the last
    // well-formed span.
    std::size_t pos = text.rfind(kBoxOpen);
    while (pos != std::string_view::npos) {
        if (auto span = close_span(text, pos)) return span;
        if (pos == 0) break;
        pos = text.rfind(kBoxOpen, pos - 1);
    }
    return std::nullopt;
}

bool verify_answer(const std::optional<std::string>& extracted, long long gold) {
    if (!extracted) return false;
    std::string_view s = *extracted;

    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    bool negative = false;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        negative = s[i] == '-';
        ++i;
    }
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) return false;

    long long value = 0;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) {
        if (value > (std::numeric_limits<long long>::max() - 9) / 10) return false;
        value = value * 10 + (s[i] - '0');
    }
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i != s.size()) return false;

    if (negative) value = -value;
    return value == gold;
}

double language_penalty(const Response& response, const Vocabulary& vocab, double lambda_lang) {
    for (int id : response.tokens) {
        if (vocab.is_non_english(id)) return -lambda_lang;
    }
    return 0.0;
}

RewardBreakdown score(const Response& response, const Query& query, const Vocabulary& vocab,
                      double lambda_lang) {
    RewardBreakdown r;
    const std::string text = vocab.decode(response.tokens);
    r.accuracy_reward = verify_answer(extract_boxed(text), query.gold_answer) ? 1.0 : 0.0;
    r.language_reward = language_penalty(response, vocab, lambda_lang);
    r.total = r.accuracy_reward + r.language_reward;
    return r;
}

}  // namespace maye
