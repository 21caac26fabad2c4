// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maye {

/// Closed token alphabet shared by the task generator and the policy.
///
/// Token surfaces follow the usual convention of a leading space on word
/// tokens, so decoding is plain concatenation and greedy longest-match
/// re-encoding recovers the original id sequence exactly.
class Vocabulary {
public:
    static const Vocabulary& standard();

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_[id]; }

    int pad() const { return pad_; }
    int bos() const { return bos_; }
    int eos() const { return eos_; }
    int box_open() const { return box_open_; }
    int brace_close() const { return brace_close_; }
    int digit(int d) const { return digits_[d]; }
    int prompt_end() const { return prompt_end_; }

    const std::vector<int>& reflection_tokens() const { return reflection_tokens_; }
    const std::vector<int>& non_english_tokens() const { return non_english_tokens_; }
    const std::vector<int>& filler_tokens() const { return filler_tokens_; }

    bool is_digit(int id) const;
    bool is_non_english(int id) const;

    /// Concatenates token surfaces. Throws ContractViolation on out-of-range ids.
    std::string decode(std::span<const int> ids) const;

    /// Greedy longest-match tokenization. Throws ParseError if the text is not
    /// a concatenation of vocabulary tokens.
    std::vector<int> encode(std::string_view text) const;

    /// Content hash over the ordered token list; stored in dataset headers.
    std::uint64_t hash() const;

private:
    std::vector<std::string> tokens_;
    int pad_ = 0, bos_ = 0, eos_ = 0, box_open_ = 0, brace_close_ = 0, prompt_end_ = 0;
    std::array<int, 10> digits_{};
    std::vector<int> reflection_tokens_;
    std::vector<int> non_english_tokens_;
    std::vector<int> filler_tokens_;
};

}  // namespace maye
