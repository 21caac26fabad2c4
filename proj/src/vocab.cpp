// SPDX-License-Identifier: Apache-2.0
#include "maye/vocab.hpp"

#include <algorithm>

#include "maye/errors.hpp"
#include "maye/hash.hpp"

namespace maye {

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary instance = [] {
        Vocabulary v;
        auto add = [&v](std::string s) {
            v.tokens_.push_back(std::move(s));
            return static_cast<int>(v.tokens_.size()) - 1;
        };

        v.pad_ = add("<pad>");
        v.bos_ = add("<s>");
        v.eos_ = add("</s>");
        v.box_open_ = add("\\boxed{");
        v.brace_close_ = add("}");
        for (int d = 0; d < 10; ++d) v.digits_[d] = add(std::string(1, static_cast<char>('0' + d)));

        // Prompt scaffolding. " the" must not be extendable into " then" by any
        // following token surface; all word tokens start with a space, so greedy
        // re-encoding stays unambiguous.
        v.filler_tokens_.push_back(add(" compute"));
        v.filler_tokens_.push_back(add(" the"));
        v.filler_tokens_.push_back(add(" value"));
        v.filler_tokens_.push_back(add(" answer"));
        v.filler_tokens_.push_back(add(" in"));
        v.filler_tokens_.push_back(add(" a"));
        v.filler_tokens_.push_back(add(" box"));
        v.filler_tokens_.push_back(add(" so"));
        v.filler_tokens_.push_back(add(" we"));
        v.filler_tokens_.push_back(add(" get"));
        v.filler_tokens_.push_back(add(" is"));
        v.filler_tokens_.push_back(add(" now"));
        v.filler_tokens_.push_back(add(" then"));
        v.filler_tokens_.push_back(add(" see"));
        v.prompt_end_ = add(" :");

        v.reflection_tokens_.push_back(add(" verify"));
        v.reflection_tokens_.push_back(add(" wait"));
        v.reflection_tokens_.push_back(add(" yet"));
        v.reflection_tokens_.push_back(add(" re-check"));
        v.reflection_tokens_.push_back(add(" check again"));

        v.non_english_tokens_.push_back(add(" 然而"));
        v.non_english_tokens_.push_back(add(" пусть"));

        return v;
    }();
    return instance;
}

bool Vocabulary::is_digit(int id) const {
    return std::find(digits_.begin(), digits_.end(), id) != digits_.end();
}

bool Vocabulary::is_non_english(int id) const {
    return std::find(non_english_tokens_.begin(), non_english_tokens_.end(), id) !=
           non_english_tokens_.end();
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) {
            throw ContractViolation("decode: token id " + std::to_string(id) + " out of vocabulary");
        }
        out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        int best = -1;
        std::size_t best_len = 0;
        for (int id = 0; id < size(); ++id) {
            const std::string& t = tokens_[static_cast<std::size_t>(id)];
            if (t.size() > best_len && text.compare(pos, t.size(), t) == 0) {
                best = id;
                best_len = t.size();
            }
        }
        if (best < 0) {
            throw ParseError("encode: no vocabulary token matches text at offset " +
                             std::to_string(pos));
        }
        out.push_back(best);
        pos += best_len;
    }
    return out;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : tokens_) {
        h = fnv1a_str(t, h);
        h = fnv1a("\x1f", 1, h);  // separator so ["ab","c"] != ["a","bc"]
    }
    return h;
}

}  // namespace maye
