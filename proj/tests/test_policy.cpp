// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "maye/context.hpp"
#include "maye/errors.hpp"
#include "maye/evalscheme.hpp"
#include "maye/policy.hpp"
#include "maye/rng.hpp"
#include "maye/taskgen.hpp"
#include "maye/vocab.hpp"

using namespace maye;

namespace {

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

PolicyDims tiny_dims() {
    PolicyDims dims;
    dims.embed = 4;
    dims.hidden = 6;
    return dims;
}

Query digit_query(int answer, std::uint64_t ctx_seed) {
    const Vocabulary& vocab = Vocabulary::standard();
    Query q;
    q.id = answer;
    q.gold_answer = answer;
    q.prompt_tokens = prompt_skeleton(answer_digit_tokens(answer, vocab), vocab);
    rng::Stream ctx_stream(ctx_seed);
    q.context = encode_context(answer, ctx_stream);
    return q;
}

Trajectory trajectory_from_sample(const PolicyParams& p, const PolicyParams& ref, const Query& q,
                                  rng::Stream& stream, rng::Stream& adv_stream) {
    GenerationConfig gen;
    gen.max_tokens = 4;
    const Response resp = sample(p, q, gen, stream);

    Trajectory traj;
    traj.query_id = q.id;
    traj.query_tokens = q.prompt_tokens;
    traj.context = q.context;
    traj.response_tokens = resp.tokens;
    traj.response_length = static_cast<int>(resp.tokens.size());
    traj.old_logprobs = response_logprobs(p, q, resp.tokens);
    traj.ref_logprobs = response_logprobs(ref, q, resp.tokens);
    traj.advantages = Eigen::VectorXd(traj.response_length);
    for (int t = 0; t < traj.response_length; ++t) {
        traj.advantages[t] = adv_stream.uniform(-1.0, 1.0);
    }
    return traj;
}

}  // namespace

TEST_CASE("init_policy is deterministic per seed and orthogonal in the recurrence") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyDims dims;
    dims.embed = 8;
    dims.hidden = 16;

    const PolicyParams a = init_policy(vocab, dims, 7, false);
    const PolicyParams b = init_policy(vocab, dims, 7, false);
    const PolicyParams c = init_policy(vocab, dims, 8, false);
    CHECK(params_hash(a) == params_hash(b));
    CHECK(params_hash(a) != params_hash(c));
    CHECK(a.all_finite());

    CHECK(a.vocab_size() == vocab.size());
    CHECK(a.embed_dim() == 8);
    CHECK(a.hidden_dim() == 16);
    CHECK(a.context_dim() == kContextDim);
    CHECK(a.hidden_bias.isZero(0.0));
    CHECK(a.out_bias.isZero(0.0));

    const Eigen::MatrixXd gram = a.rec.transpose() * a.rec;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(16, 16);
    CHECK((gram - eye).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("param_blocks exposes all seven blocks in a stable order") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyParams p = init_policy(vocab, tiny_dims(), 1, false);
    const auto blocks = param_blocks(p);
    REQUIRE(blocks.size() == kPolicyBlockCount);
    CHECK(blocks[0] == &p.emb);
    CHECK(blocks[1] == &p.rec);
    CHECK(blocks[2] == &p.inp);
    CHECK(blocks[3] == &p.ctx_proj);
    CHECK(blocks[4] == &p.out);
    CHECK(blocks[5] == &p.hidden_bias);
    CHECK(blocks[6] == &p.out_bias);

    const PolicyParams z = zeros_like(p);
    for (const Eigen::MatrixXd* block : param_blocks(z)) CHECK(block->isZero(0.0));
    CHECK(z.emb.rows() == p.emb.rows());
    CHECK(z.emb.cols() == p.emb.cols());
}

TEST_CASE("sequence_logprobs normalizes over the full vocabulary") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyParams p = init_policy(vocab, tiny_dims(), 3, false);
    p.out.setZero();
    p.out_bias.setZero();

    const Query q = digit_query(42, 5);
    const std::vector<int> resp = {vocab.box_open(), vocab.digit(4), vocab.digit(2),
                                   vocab.brace_close(), vocab.eos()};
    const Eigen::VectorXd lp = sequence_logprobs(p, q.prompt_tokens, q.context, resp);
    REQUIRE(lp.size() == static_cast<Eigen::Index>(resp.size()));
    const double uniform = -std::log(static_cast<double>(vocab.size()));
    for (Eigen::Index t = 0; t < lp.size(); ++t) {
        CHECK(lp[t] == doctest::Approx(uniform).epsilon(1e-12));
    }

    // The query-based wrapper is the same computation.
    PolicyParams q_policy = init_policy(vocab, tiny_dims(), 9, false);
    const Eigen::VectorXd via_query = response_logprobs(q_policy, q, resp);
    const Eigen::VectorXd via_parts = sequence_logprobs(q_policy, q.prompt_tokens, q.context, resp);
    REQUIRE(via_query.size() == via_parts.size());
    for (Eigen::Index t = 0; t < via_query.size(); ++t) CHECK(via_query[t] == via_parts[t]);
}

TEST_CASE("sampling matches the exact next-token distribution") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyDims dims;
    dims.embed = 8;
    dims.hidden = 16;
    const PolicyParams p = init_policy(vocab, dims, 21, false);

    Query q = digit_query(7, 3);
    q.prompt_tokens = {vocab.bos(), vocab.digit(7), vocab.prompt_end()};

    // Exact conditional of the first generated token: softmax excluding PAD.
    DecodeState st = begin_decode(p, q.context);
    for (int t : q.prompt_tokens) advance_decode(p, st, t);
    Eigen::VectorXd logits = next_token_logits(p, st);
    const double max_logit = logits.maxCoeff();
    Eigen::VectorXd probs = (logits.array() - max_logit).exp();
    probs[vocab.pad()] = 0.0;
    probs /= probs.sum();

    GenerationConfig gen;
    gen.max_tokens = 1;
    const int n_draws = 100000;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(vocab.size());
    for (int i = 0; i < n_draws; ++i) {
        rng::Stream stream = rng::derive_stream({0x74760000ULL, static_cast<std::uint64_t>(i)});
        const Response r = sample(p, q, gen, stream);
        REQUIRE(r.tokens.size() == 1);
        counts[r.tokens[0]] += 1.0;
    }
    CHECK(counts[vocab.pad()] == 0.0);

    const Eigen::VectorXd empirical = counts / static_cast<double>(n_draws);
    const double tv = 0.5 * (empirical - probs).cwiseAbs().sum();
    CHECK(tv < 0.012);
}

TEST_CASE("degenerate generation settings reduce to a deterministic argmax chain") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyDims dims;
    dims.embed = 8;
    dims.hidden = 16;
    const PolicyParams p = init_policy(vocab, dims, 2, true);
    const Query q = digit_query(58, 44);

    GenerationConfig greedy;
    greedy.temperature = 0.01;
    greedy.top_p = 0.001;
    greedy.max_tokens = 10;

    rng::Stream s1(123), s2(123);
    const Response r1 = sample(p, q, greedy, s1);
    const Response r2 = sample(p, q, greedy, s2);
    CHECK(r1.tokens == r2.tokens);
    CHECK(r1.finished == r2.finished);
    // No randomness consumed: both streams still agree with a fresh one.
    rng::Stream fresh(123);
    const std::uint64_t expected_first = fresh.next_u64();
    CHECK(s1.next_u64() == expected_first);
    CHECK(s2.next_u64() == expected_first);

    // Manual argmax chain with lowest-id tie-breaking and PAD excluded.
    DecodeState st = begin_decode(p, q.context);
    for (int t : q.prompt_tokens) advance_decode(p, st, t);
    std::vector<int> expected;
    for (int step = 0; step < greedy.max_tokens; ++step) {
        const Eigen::VectorXd logits = next_token_logits(p, st);
        int best = -1;
        for (int id = 0; id < vocab.size(); ++id) {
            if (id == vocab.pad()) continue;
            if (best < 0 || logits[id] > logits[best]) best = id;
        }
        expected.push_back(best);
        if (best == vocab.eos()) break;
        advance_decode(p, st, best);
    }
    CHECK(r1.tokens == expected);
}

TEST_CASE("max_tokens caps generation and marks the response unfinished") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyParams p = init_policy(vocab, tiny_dims(), 4, false);
    p.out.setZero();
    p.out_bias.setZero();
    // All logits equal: greedy picks the lowest non-PAD id forever, which is
    // BOS, so EOS never appears and the cap must do the cutting.
    CHECK(vocab.bos() < vocab.eos());

    const Query q = digit_query(3, 8);
    GenerationConfig greedy;
    greedy.temperature = 0.01;
    greedy.top_p = 0.001;
    greedy.max_tokens = 3;

    rng::Stream stream(0);
    const Response r = sample(p, q, greedy, stream);
    CHECK(r.tokens == std::vector<int>{vocab.bos(), vocab.bos(), vocab.bos()});
    CHECK(!r.finished);

    GenerationConfig bad = greedy;
    bad.max_tokens = 0;
    CHECK_THROWS_AS((void)sample(p, q, bad, stream), ConfigError);
    bad = greedy;
    bad.temperature = 0.0;
    CHECK_THROWS_AS((void)sample(p, q, bad, stream), ConfigError);
    bad = greedy;
    bad.top_p = 1.5;
    CHECK_THROWS_AS((void)sample(p, q, bad, stream), ConfigError);
    bad = greedy;
    bad.n_samples = 0;
    CHECK_THROWS_AS((void)sample(p, q, bad, stream), ConfigError);
}

TEST_CASE("loss gradient matches finite differences through the recurrent policy") {
    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams p = init_policy(vocab, tiny_dims(), 13, false);
    const PolicyParams ref = init_policy(vocab, tiny_dims(), 14, false);

    rng::Stream sample_stream(77), adv_stream(78);
    std::vector<Trajectory> trajs;
    trajs.push_back(trajectory_from_sample(p, ref, digit_query(5, 1), sample_stream, adv_stream));
    trajs.push_back(trajectory_from_sample(p, ref, digit_query(73, 2), sample_stream, adv_stream));
    const std::vector<const Trajectory*> batch = {&trajs[0], &trajs[1]};

    LossSpec spec;
    spec.epsilon = 0.2;
    spec.kl_loss_coeff = 0.05;

    const MinibatchGradient g = loss_gradient(p, batch, spec);
    CHECK(g.traj_count == 2);
    CHECK(g.token_count == trajs[0].response_length + trajs[1].response_length);

    const auto grad_blocks = param_blocks(g.grad);
    rng::Stream pick(99);
    for (int b = 0; b < kPolicyBlockCount; ++b) {
        for (int probe = 0; probe < 3; ++probe) {
            PolicyParams shifted = p;
            auto blocks = param_blocks(shifted);
            const auto rows = blocks[static_cast<std::size_t>(b)]->rows();
            const auto cols = blocks[static_cast<std::size_t>(b)]->cols();
            const auto i = static_cast<Eigen::Index>(pick.uniform_int(0, rows - 1));
            const auto j = static_cast<Eigen::Index>(pick.uniform_int(0, cols - 1));

            const double h = 1e-6;
            (*blocks[static_cast<std::size_t>(b)])(i, j) += h;
            const double up = minibatch_loss_sum(shifted, batch, spec);
            (*blocks[static_cast<std::size_t>(b)])(i, j) -= 2.0 * h;
            const double down = minibatch_loss_sum(shifted, batch, spec);

            const double fd = (up - down) / (2.0 * h);
            const double analytic = (*grad_blocks[static_cast<std::size_t>(b)])(i, j);
            CHECK(analytic == doctest::Approx(fd).epsilon(5e-5));
        }
    }
}

TEST_CASE("zero advantages with no KL penalty give an exactly zero gradient") {
    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams p = init_policy(vocab, tiny_dims(), 31, false);

    rng::Stream sample_stream(5), adv_stream(6);
    Trajectory traj = trajectory_from_sample(p, p, digit_query(9, 3), sample_stream, adv_stream);
    traj.advantages.setZero();
    const std::vector<const Trajectory*> batch = {&traj};

    LossSpec spec;
    spec.kl_loss_coeff = 0.0;
    const MinibatchGradient g = loss_gradient(p, batch, spec);
    for (const Eigen::MatrixXd* block : param_blocks(g.grad)) {
        CHECK(block->isZero(0.0));
    }
    CHECK(g.loss_sum == 0.0);
}

TEST_CASE("unclipped gradients are linear in the advantages") {
    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams p = init_policy(vocab, tiny_dims(), 41, false);

    rng::Stream sample_stream(15), adv_stream(16);
    Trajectory traj = trajectory_from_sample(p, p, digit_query(27, 4), sample_stream, adv_stream);
    const std::vector<const Trajectory*> batch = {&traj};

    LossSpec spec;
    spec.kl_loss_coeff = 0.0;
    const MinibatchGradient g1 = loss_gradient(p, batch, spec);

    traj.advantages *= 2.0;
    const MinibatchGradient g2 = loss_gradient(p, batch, spec);

    const auto b1 = param_blocks(g1.grad);
    const auto b2 = param_blocks(g2.grad);
    for (std::size_t b = 0; b < kPolicyBlockCount; ++b) {
        CHECK((2.0 * *b1[b] - *b2[b]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gradient accumulation is independent of the chunking") {
    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams p = init_policy(vocab, tiny_dims(), 51, false);
    const PolicyParams ref = init_policy(vocab, tiny_dims(), 52, false);

    rng::Stream sample_stream(25), adv_stream(26);
    std::vector<Trajectory> trajs;
    for (int i = 0; i < 4; ++i) {
        trajs.push_back(
            trajectory_from_sample(p, ref, digit_query(10 + i, 7 + i), sample_stream, adv_stream));
    }
    std::vector<const Trajectory*> all;
    for (const auto& t : trajs) all.push_back(&t);

    LossSpec spec;
    spec.kl_loss_coeff = 0.01;
    const MinibatchGradient whole = loss_gradient(p, all, spec);

    MinibatchGradient chunked = zero_gradient(p);
    const std::span<const Trajectory* const> view(all);
    accumulate_loss_gradient(p, view.subspan(0, 1), spec, chunked);
    accumulate_loss_gradient(p, view.subspan(1, 2), spec, chunked);
    accumulate_loss_gradient(p, view.subspan(3, 1), spec, chunked);

    CHECK(params_hash(chunked.grad) == params_hash(whole.grad));
    CHECK(chunked.loss_sum == whole.loss_sum);
    CHECK(chunked.ratio_sum == whole.ratio_sum);
    CHECK(chunked.clipped_tokens == whole.clipped_tokens);
    CHECK(chunked.kl_loss_sum == whole.kl_loss_sum);
    CHECK(chunked.token_count == whole.token_count);
    CHECK(chunked.traj_count == whole.traj_count);
}

TEST_CASE("warm start buys measurable task competence over a cold policy") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyDims dims;
    dims.embed = 16;
    dims.hidden = 48;

    DatasetSpec spec;
    spec.n_train = 8;
    spec.n_val = 40;
    spec.n_test = 4;
    spec.dominance_mix = 1.0;
    spec.seed = 11;
    const Dataset ds = generate_dataset(spec, vocab);
    const auto val = queries_in_split(ds, Split::Validation);

    const PolicyParams warm = init_policy(vocab, dims, 2, true);
    const PolicyParams cold = init_policy(vocab, dims, 2, false);
    const double warm_acc = evaluate_split(warm, val, EvalConfigId::Pass1T001, vocab, 1, 0, 8);
    const double cold_acc = evaluate_split(cold, val, EvalConfigId::Pass1T001, vocab, 1, 0, 8);

    CHECK(warm_acc >= 0.15);
    CHECK(warm_acc > cold_acc);

    // The supervised budget is deliberately too small to saturate the task.
    CHECK(warm_acc < 1.0);
}

TEST_CASE("snapshots are frozen deep copies") {
    const Vocabulary& vocab = Vocabulary::standard();
    PolicyParams p = init_policy(vocab, tiny_dims(), 61, false);
    const std::uint64_t original = params_hash(p);

    const PolicySnapshot snap = make_snapshot(p, 12);
    CHECK(snap.created_step == 12);
    CHECK(params_hash(snap.params) == original);

    p.out.array() += 1.0;
    CHECK(params_hash(p) != original);
    CHECK(params_hash(snap.params) == original);
}

TEST_CASE("policy checkpoints round-trip bitwise and reject corruption") {
    const Vocabulary& vocab = Vocabulary::standard();
    const PolicyParams p = init_policy(vocab, tiny_dims(), 71, true);
    const auto path = temp_path("maye_test_policy.ckpt");
    save_policy(p, path);

    const PolicyParams back = load_policy(path);
    CHECK(params_hash(back) == params_hash(p));

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    REQUIRE(bytes.size() > 64);

    auto write_bytes_to = [&](const std::string& data, const char* name) {
        const auto out_path = temp_path(name);
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        return out_path;
    };

    std::string truncated = bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS((void)load_policy(write_bytes_to(truncated, "maye_test_policy_trunc.ckpt")),
                    ParseError);

    std::string bad_magic = bytes;
    bad_magic[0] = static_cast<char>(bad_magic[0] ^ 0x5a);
    CHECK_THROWS_AS((void)load_policy(write_bytes_to(bad_magic, "maye_test_policy_magic.ckpt")),
                    ParseError);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x01);
    CHECK_THROWS_AS((void)load_policy(write_bytes_to(flipped, "maye_test_policy_flip.ckpt")),
                    ParseError);

    CHECK_THROWS_AS((void)load_policy(temp_path("maye_no_such_policy.ckpt")), ParseError);
}
