// SPDX-License-Identifier: Apache-2.0
#include "maye/taskgen.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "maye/context.hpp"
#include "maye/errors.hpp"

namespace maye {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kTaskgenSalt = 0x7461736b67656eULL;  // "taskgen"

std::string digit_string(int answer) { return std::to_string(answer); }

Query make_query(std::int64_t id, Split split, const DatasetSpec& spec, const Vocabulary& vocab) {
    auto stream = rng::derive_stream({spec.seed, kTaskgenSalt, static_cast<std::uint64_t>(id)});

    const int answer =
        static_cast<int>(stream.uniform_int(spec.answer_lo, spec.answer_hi));
    const bool text_dominant = stream.next_double() < spec.dominance_mix;

    std::vector<int> digit_run;
    if (text_dominant) {
        digit_run = answer_digit_tokens(answer, vocab);
    } else {
        // Distractor digits; resample until the gold digit string is not a
        // substring, so the answer is only recoverable from the context.
        const std::string gold = digit_string(answer);
        for (;;) {
            const int distractor = static_cast<int>(stream.uniform_int(0, kMaxAnswer));
            const std::string s = digit_string(distractor);
            if (s.find(gold) == std::string::npos && gold.find(s) == std::string::npos) {
                digit_run = answer_digit_tokens(distractor, vocab);
                break;
            }
        }
    }

    Query q;
    q.id = id;
    q.prompt_tokens = prompt_skeleton(digit_run, vocab);
    q.context = encode_context(answer, stream);
    q.gold_answer = answer;
    q.dominance = text_dominant ? Dominance::TextDominant : Dominance::VisionDominant;
    q.split = split;
    return q;
}

ordered_json query_to_json(const Query& q) {
    ordered_json j;
    j["id"] = q.id;
    j["prompt_tokens"] = q.prompt_tokens;
    std::vector<double> ctx(q.context.data(), q.context.data() + q.context.size());
    j["context"] = ctx;
    j["gold_answer"] = q.gold_answer;
    j["dominance"] = q.dominance == Dominance::TextDominant ? "text" : "vision";
    switch (q.split) {
        case Split::Train: j["split"] = "train"; break;
        case Split::Validation: j["split"] = "val"; break;
        case Split::Test: j["split"] = "test"; break;
    }
    return j;
}

Split parse_split(const std::string& s, long line) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Validation;
    if (s == "test") return Split::Test;
    throw ParseError("unknown split \"" + s + "\"", line);
}

Dominance parse_dominance(const std::string& s, long line) {
    if (s == "text") return Dominance::TextDominant;
    if (s == "vision") return Dominance::VisionDominant;
    throw ParseError("unknown dominance \"" + s + "\"", line);
}

}  // namespace

std::string to_string(Dominance d) {
    return d == Dominance::TextDominant ? "text" : "vision";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "val";
        default: return "test";
    }
}

bool operator==(const Query& a, const Query& b) {
    return a.id == b.id && a.prompt_tokens == b.prompt_tokens &&
           a.context.size() == b.context.size() && a.context == b.context &&
           a.gold_answer == b.gold_answer && a.dominance == b.dominance && a.split == b.split;
}

bool operator==(const Dataset& a, const Dataset& b) {
    return a.queries == b.queries && a.split_sizes == b.split_sizes && a.seed == b.seed;
}

std::vector<int> answer_digit_tokens(int answer, const Vocabulary& vocab) {
    std::vector<int> out;
    for (char c : digit_string(answer)) out.push_back(vocab.digit(c - '0'));
    return out;
}

std::vector<int> prompt_skeleton(const std::vector<int>& digit_run, const Vocabulary& v) {
    std::vector<int> p;
    p.push_back(v.bos());
    p.push_back(v.encode(" compute")[0]);
    p.push_back(v.encode(" the")[0]);
    p.push_back(v.encode(" value")[0]);
    p.insert(p.end(), digit_run.begin(), digit_run.end());
    p.push_back(v.encode(" answer")[0]);
    p.push_back(v.encode(" in")[0]);
    p.push_back(v.encode(" a")[0]);
    p.push_back(v.encode(" box")[0]);
    p.push_back(v.prompt_end());
    return p;
}

Dataset generate_dataset(const DatasetSpec& spec, const Vocabulary& vocab) {
    if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0) {
        throw ConfigError("generate_dataset: split sizes must be non-negative");
    }
    if (spec.dominance_mix < 0.0 || spec.dominance_mix > 1.0) {
        throw ConfigError("generate_dataset: dominance_mix must be in [0, 1]");
    }
    if (spec.answer_lo > spec.answer_hi) {
        throw ConfigError("generate_dataset: empty answer_range");
    }
    if (spec.answer_lo < 0 || spec.answer_hi > kMaxAnswer) {
        throw ConfigError("generate_dataset: answer_range must lie within [0, 99]");
    }

    Dataset ds;
    ds.seed = spec.seed;
    ds.split_sizes = {spec.n_train, spec.n_val, spec.n_test};
    ds.queries.reserve(static_cast<std::size_t>(ds.split_sizes.total()));

    std::int64_t id = 0;
    for (int i = 0; i < spec.n_train; ++i) ds.queries.push_back(make_query(id++, Split::Train, spec, vocab));
    for (int i = 0; i < spec.n_val; ++i) ds.queries.push_back(make_query(id++, Split::Validation, spec, vocab));
    for (int i = 0; i < spec.n_test; ++i) ds.queries.push_back(make_query(id++, Split::Test, spec, vocab));
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw ConfigError("write_dataset: cannot open " + path.string() + " for writing");

    ordered_json header;
    header["seed"] = ds.seed;
    header["vocab_hash"] = vocab.hash();
    header["split_sizes"] = {{"train", ds.split_sizes.train},
                             {"val", ds.split_sizes.val},
                             {"test", ds.split_sizes.test}};
    out << header.dump() << "\n";
    for (const Query& q : ds.queries) out << query_to_json(q).dump() << "\n";
    if (!out) throw ConfigError("write_dataset: write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw ParseError("read_dataset: cannot open " + path.string());

    std::string line;
    long line_no = 0;

    if (!std::getline(in, line)) throw ParseError("read_dataset: empty file", 1);
    ++line_no;

    Dataset ds;
    try {
        auto header = nlohmann::json::parse(line);
        ds.seed = header.at("seed").get<std::uint64_t>();
        if (header.at("vocab_hash").get<std::uint64_t>() != vocab.hash()) {
            throw ParseError("vocab_hash does not match the built-in vocabulary", 1);
        }
        const auto& sizes = header.at("split_sizes");
        ds.split_sizes.train = sizes.at("train").get<int>();
        ds.split_sizes.val = sizes.at("val").get<int>();
        ds.split_sizes.test = sizes.at("test").get<int>();
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), 1);
    }

    std::unordered_set<std::int64_t> seen_ids;
    SplitSizes counted;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Query q;
        try {
            auto j = nlohmann::json::parse(line);
            q.id = j.at("id").get<std::int64_t>();
            q.prompt_tokens = j.at("prompt_tokens").get<std::vector<int>>();
            auto ctx = j.at("context").get<std::vector<double>>();
            q.context = Eigen::Map<const Eigen::VectorXd>(ctx.data(),
                                                          static_cast<Eigen::Index>(ctx.size()));
            q.gold_answer = j.at("gold_answer").get<int>();
            q.dominance = parse_dominance(j.at("dominance").get<std::string>(), line_no);
            q.split = parse_split(j.at("split").get<std::string>(), line_no);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(std::string("bad query row: ") + e.what(), line_no);
        }

        if (q.prompt_tokens.empty() || q.prompt_tokens.back() != vocab.prompt_end()) {
            throw ParseError("prompt does not end with the prompt terminator", line_no);
        }
        for (int t : q.prompt_tokens) {
            if (t < 0 || t >= vocab.size()) throw ParseError("prompt token out of vocabulary", line_no);
        }
        if (q.context.size() != kContextDim) {
            throw ParseError("context has wrong dimension", line_no);
        }
        if (!seen_ids.insert(q.id).second) {
            throw ParseError("duplicate query id " + std::to_string(q.id), line_no);
        }
        switch (q.split) {
            case Split::Train: ++counted.train; break;
            case Split::Validation: ++counted.val; break;
            case Split::Test: ++counted.test; break;
        }
        ds.queries.push_back(std::move(q));
    }

    if (!(counted == ds.split_sizes)) {
        throw ParseError("split_sizes in header disagree with row counts", 1);
    }
    return ds;
}

std::vector<const Query*> queries_in_split(const Dataset& ds, Split split) {
    std::vector<const Query*> out;
    for (const Query& q : ds.queries) {
        if (q.split == split) out.push_back(&q);
    }
    return out;
}

}  // namespace maye
