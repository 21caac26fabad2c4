// SPDX-License-Identifier: Apache-2.0
#include "maye/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "maye/errors.hpp"
#include "maye/hash.hpp"

namespace maye {

namespace {

constexpr std::uint64_t kPolicyInitSalt = 0x706f6c696e6974ULL;  // "polinit"
constexpr std::uint64_t kWarmStartSalt = 0x7761726d7374ULL;     // "warmst"

constexpr int kWarmStartSteps = 200;
constexpr int kWarmStartBatch = 16;
constexpr double kWarmStartLr = 0.02;
constexpr double kWarmStartDistractorProb = 0.0;
constexpr double kInitStd = 0.08;

constexpr char kCheckpointMagic[8] = {'M', 'A', 'Y', 'E', 'P', 'O', 'L', '1'};

void check_token_range(std::span<const int> tokens, int vocab_size, const char* what) {
    for (int t : tokens) {
        if (t < 0 || t >= vocab_size) {
            throw ContractViolation(std::string(what) + ": token id out of range");
        }
    }
}

/// Forward pass over prompt + response. hidden has one column per consumed
/// input count: column 0 is h_0 (context only), column c is the state after
/// consuming c inputs. Response token j is predicted from column P + j.
struct SeqForward {
    Eigen::MatrixXd hidden;    // H x (P + T)
    Eigen::VectorXd logprobs;  // T
    std::vector<int> inputs;   // prompt + response[0 .. T-2]
    int prompt_len = 0;
};

double log_softmax_at(const Eigen::VectorXd& logits, int index) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return logits(index) - lse;
}

SeqForward forward_seq(const PolicyParams& p, std::span<const int> prompt,
                       const Eigen::VectorXd& ctx, std::span<const int> response) {
    if (response.empty()) throw ContractViolation("forward_seq: empty response");
    if (ctx.size() != p.context_dim()) {
        throw ContractViolation("forward_seq: context dimension mismatch");
    }
    check_token_range(prompt, p.vocab_size(), "forward_seq prompt");
    check_token_range(response, p.vocab_size(), "forward_seq response");

    SeqForward f;
    f.prompt_len = static_cast<int>(prompt.size());
    const int T = static_cast<int>(response.size());
    f.inputs.assign(prompt.begin(), prompt.end());
    f.inputs.insert(f.inputs.end(), response.begin(), response.end() - 1);

    const int cols = static_cast<int>(f.inputs.size()) + 1;
    f.hidden.resize(p.hidden_dim(), cols);
    f.hidden.col(0) = (p.ctx_proj * ctx).array().tanh();
    for (int c = 1; c < cols; ++c) {
        const int x = f.inputs[static_cast<std::size_t>(c - 1)];
        f.hidden.col(c) = (p.rec * f.hidden.col(c - 1) + p.inp * p.emb.row(x).transpose() +
                           p.hidden_bias.col(0))
                              .array()
                              .tanh();
    }

    f.logprobs.resize(T);
    for (int j = 0; j < T; ++j) {
        const Eigen::VectorXd logits = p.out * f.hidden.col(f.prompt_len + j) + p.out_bias.col(0);
        f.logprobs(j) = log_softmax_at(logits, response[static_cast<std::size_t>(j)]);
    }
    return f;
}

/// Accumulates d(dloss_dlogp . logprobs)/d params into grad. Exact reverse
/// pass through the recurrence; logit softmaxes are recomputed from the
/// cached hidden states.
void backward_seq(const PolicyParams& p, const SeqForward& f, const Eigen::VectorXd& ctx,
                  std::span<const int> response, const Eigen::VectorXd& dloss_dlogp,
                  PolicyParams& grad) {
    const int T = static_cast<int>(response.size());
    const int P = f.prompt_len;
    const int last_col = P + T - 1;

    Eigen::VectorXd carry = Eigen::VectorXd::Zero(p.hidden_dim());
    for (int c = last_col; c >= 0; --c) {
        Eigen::VectorXd dh = carry;
        if (c >= P) {
            const int j = c - P;
            const Eigen::VectorXd logits = p.out * f.hidden.col(c) + p.out_bias.col(0);
            const double m = logits.maxCoeff();
            Eigen::VectorXd probs = (logits.array() - m).exp();
            probs /= probs.sum();
            Eigen::VectorXd dlogits = -dloss_dlogp(j) * probs;
            dlogits(response[static_cast<std::size_t>(j)]) += dloss_dlogp(j);
            grad.out.noalias() += dlogits * f.hidden.col(c).transpose();
            grad.out_bias.col(0) += dlogits;
            dh.noalias() += p.out.transpose() * dlogits;
        }
        const Eigen::VectorXd dpre = dh.array() * (1.0 - f.hidden.col(c).array().square());
        if (c == 0) {
            grad.ctx_proj.noalias() += dpre * ctx.transpose();
            break;
        }
        const int x = f.inputs[static_cast<std::size_t>(c - 1)];
        grad.rec.noalias() += dpre * f.hidden.col(c - 1).transpose();
        grad.inp.noalias() += dpre * p.emb.row(x);
        grad.hidden_bias.col(0) += dpre;
        grad.emb.row(x) += dpre.transpose() * p.inp;
        carry.noalias() = p.rec.transpose() * dpre;
    }
}

}  // namespace

bool PolicyParams::all_finite() const {
    for (const Eigen::MatrixXd* b : param_blocks(*this)) {
        if (!b->allFinite()) return false;
    }
    return true;
}

std::array<Eigen::MatrixXd*, kPolicyBlockCount> param_blocks(PolicyParams& p) {
    return {&p.emb, &p.rec, &p.inp, &p.ctx_proj, &p.out, &p.hidden_bias, &p.out_bias};
}

std::array<const Eigen::MatrixXd*, kPolicyBlockCount> param_blocks(const PolicyParams& p) {
    return {&p.emb, &p.rec, &p.inp, &p.ctx_proj, &p.out, &p.hidden_bias, &p.out_bias};
}

PolicyParams zeros_like(const PolicyParams& p) {
    PolicyParams z;
    auto src = param_blocks(p);
    auto dst = param_blocks(z);
    for (int i = 0; i < kPolicyBlockCount; ++i) {
        dst[static_cast<std::size_t>(i)]->setZero(src[static_cast<std::size_t>(i)]->rows(),
                                                  src[static_cast<std::size_t>(i)]->cols());
    }
    return z;
}

std::uint64_t params_hash(const PolicyParams& p) {
    std::uint64_t h = kFnvOffset;
    for (const Eigen::MatrixXd* b : param_blocks(p)) {
        const std::uint64_t rows = static_cast<std::uint64_t>(b->rows());
        const std::uint64_t cols = static_cast<std::uint64_t>(b->cols());
        h = fnv1a(&rows, sizeof rows, h);
        h = fnv1a(&cols, sizeof cols, h);
        h = fnv1a_doubles(b->data(), static_cast<std::size_t>(b->size()), h);
    }
    return h;
}

PolicySnapshot make_snapshot(const PolicyParams& p, std::int64_t step) {
    return PolicySnapshot{p, step};
}

void GenerationConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("generation: temperature must be positive");
    if (!(top_p > 0.0) || top_p > 1.0) throw ConfigError("generation: top_p must be in (0, 1]");
    if (max_tokens < 1) throw ConfigError("generation: max_tokens must be at least 1");
    if (n_samples < 1) throw ConfigError("generation: n_samples must be at least 1");
}

namespace {

void run_warm_start(PolicyParams& p, const Vocabulary& vocab, std::uint64_t seed);

}  // namespace

PolicyParams init_policy(const Vocabulary& vocab, const PolicyDims& dims, std::uint64_t seed,
                         bool warm_start) {
    if (dims.embed < 1 || dims.hidden < 1 || dims.context < 1) {
        throw ConfigError("init_policy: dimensions must be positive");
    }
    const int V = vocab.size();
    PolicyParams p;
    p.emb.resize(V, dims.embed);
    p.rec.resize(dims.hidden, dims.hidden);
    p.inp.resize(dims.hidden, dims.embed);
    p.ctx_proj.resize(dims.hidden, dims.context);
    p.out.resize(V, dims.hidden);
    p.hidden_bias.setZero(dims.hidden, 1);
    p.out_bias.setZero(V, 1);

    auto stream = rng::derive_stream({seed, kPolicyInitSalt});
    for (Eigen::MatrixXd* b : {&p.emb, &p.rec, &p.inp, &p.ctx_proj, &p.out}) {
        double* d = b->data();
        for (Eigen::Index i = 0; i < b->size(); ++i) d[i] = kInitStd * stream.normal();
    }
    // Orthogonal recurrence so the context written into the initial hidden
    // state survives across the whole prompt instead of decaying. Modified
    // Gram-Schmidt with one re-orthogonalization pass; a random Gaussian
    // matrix is almost surely full rank.
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index c = 0; c < p.rec.cols(); ++c) {
            for (Eigen::Index k = 0; k < c; ++k) {
                p.rec.col(c) -= p.rec.col(k).dot(p.rec.col(c)) * p.rec.col(k);
            }
            p.rec.col(c).normalize();
        }
    }

    if (warm_start) run_warm_start(p, vocab, seed);
    return p;
}

Eigen::VectorXd sequence_logprobs(const PolicyParams& p, std::span<const int> prompt,
                                  const Eigen::VectorXd& context,
                                  std::span<const int> response_tokens) {
    return forward_seq(p, prompt, context, response_tokens).logprobs;
}

Eigen::VectorXd response_logprobs(const PolicyParams& p, const Query& query,
                                  std::span<const int> response_tokens) {
    return sequence_logprobs(p, query.prompt_tokens, query.context, response_tokens);
}

DecodeState begin_decode(const PolicyParams& p, const Eigen::VectorXd& context) {
    if (context.size() != p.context_dim()) {
        throw ContractViolation("begin_decode: context dimension mismatch");
    }
    DecodeState st;
    st.hidden = (p.ctx_proj * context).array().tanh();
    return st;
}

void advance_decode(const PolicyParams& p, DecodeState& state, int token) {
    if (token < 0 || token >= p.vocab_size()) {
        throw ContractViolation("advance_decode: token id out of range");
    }
    state.hidden = (p.rec * state.hidden + p.inp * p.emb.row(token).transpose() +
                    p.hidden_bias.col(0))
                       .array()
                       .tanh();
}

Eigen::VectorXd next_token_logits(const PolicyParams& p, const DecodeState& state) {
    return p.out * state.hidden + p.out_bias.col(0);
}

namespace {

int draw_token(const Eigen::VectorXd& logits, const GenerationConfig& gen, int pad_id,
               rng::Stream& stream) {
    const int V = static_cast<int>(logits.size());
    Eigen::VectorXd scaled = logits / gen.temperature;
    scaled.array() -= scaled.maxCoeff();
    Eigen::VectorXd probs = scaled.array().exp();
    probs(pad_id) = 0.0;
    const double total = probs.sum();
    if (!(total > 0.0)) throw ContractViolation("draw_token: distribution collapsed");
    probs /= total;

    std::vector<int> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs(a) != probs(b)) return probs(a) > probs(b);
        return a < b;
    });

    int kept = V;
    double cum = 0.0;
    for (int i = 0; i < V; ++i) {
        cum += probs(order[static_cast<std::size_t>(i)]);
        if (cum >= gen.top_p) {
            kept = i + 1;
            break;
        }
    }

    if (kept == 1) return order[0];  // deterministic; no randomness consumed

    double mass = 0.0;
    for (int i = 0; i < kept; ++i) mass += probs(order[static_cast<std::size_t>(i)]);
    const double u = stream.next_double() * mass;
    double acc = 0.0;
    for (int i = 0; i < kept; ++i) {
        acc += probs(order[static_cast<std::size_t>(i)]);
        if (u < acc) return order[static_cast<std::size_t>(i)];
    }
    return order[static_cast<std::size_t>(kept - 1)];
}

}  // namespace

Response sample(const PolicyParams& p, const Query& query, const GenerationConfig& gen,
                rng::Stream& stream) {
    gen.validate();
    const Vocabulary& vocab = Vocabulary::standard();
    DecodeState st = begin_decode(p, query.context);
    for (int t : query.prompt_tokens) advance_decode(p, st, t);

    Response r;
    r.tokens.reserve(static_cast<std::size_t>(std::min(gen.max_tokens, 64)));
    for (int step = 0; step < gen.max_tokens; ++step) {
        const Eigen::VectorXd logits = next_token_logits(p, st);
        const int tok = draw_token(logits, gen, vocab.pad(), stream);
        r.tokens.push_back(tok);
        if (tok == vocab.eos()) {
            r.finished = true;
            break;
        }
        advance_decode(p, st, tok);
    }
    return r;
}

MinibatchGradient zero_gradient(const PolicyParams& p) {
    MinibatchGradient g;
    g.grad = zeros_like(p);
    return g;
}

void accumulate_loss_gradient(const PolicyParams& p,
                              std::span<const Trajectory* const> minibatch, const LossSpec& spec,
                              MinibatchGradient& acc) {
    for (const Trajectory* traj : minibatch) {
        const std::span<const int> response(traj->response_tokens.data(),
                                            static_cast<std::size_t>(traj->response_length));
        const SeqForward f = forward_seq(p, traj->query_tokens, traj->context, response);
        const ObjectiveTerms terms =
            objective_terms(f.logprobs, *traj, spec.epsilon, spec.kl_loss_coeff);
        backward_seq(p, f, traj->context, response, terms.dloss_dlogp, acc.grad);

        acc.loss_sum += terms.loss;
        acc.ratio_sum += terms.ratio_sum;
        acc.clipped_tokens += terms.clipped_tokens;
        acc.kl_loss_sum += terms.kl_loss;
        acc.token_count += traj->response_length;
        ++acc.traj_count;
    }
}

MinibatchGradient loss_gradient(const PolicyParams& p,
                                std::span<const Trajectory* const> minibatch,
                                const LossSpec& spec) {
    MinibatchGradient out = zero_gradient(p);
    accumulate_loss_gradient(p, minibatch, spec, out);
    return out;
}

double minibatch_loss_sum(const PolicyParams& p, std::span<const Trajectory* const> minibatch,
                          const LossSpec& spec) {
    double loss = 0.0;
    for (const Trajectory* traj : minibatch) {
        const std::span<const int> response(traj->response_tokens.data(),
                                            static_cast<std::size_t>(traj->response_length));
        const Eigen::VectorXd lp =
            sequence_logprobs(p, traj->query_tokens, traj->context, response);
        loss += objective_terms(lp, *traj, spec.epsilon, spec.kl_loss_coeff).loss;
    }
    return loss;
}

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("load_policy: truncated checkpoint " + path);
}

}  // namespace

void save_policy(const PolicyParams& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_policy: cannot open " + path.string() + " for writing");

    write_bytes(out, kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint32_t n_blocks = kPolicyBlockCount;
    write_bytes(out, &n_blocks, sizeof n_blocks);

    std::uint64_t h = kFnvOffset;
    for (const Eigen::MatrixXd* b : param_blocks(p)) {
        const std::uint32_t rows = static_cast<std::uint32_t>(b->rows());
        const std::uint32_t cols = static_cast<std::uint32_t>(b->cols());
        write_bytes(out, &rows, sizeof rows);
        write_bytes(out, &cols, sizeof cols);
    }
    for (const Eigen::MatrixXd* b : param_blocks(p)) {
        const std::size_t n = static_cast<std::size_t>(b->size());
        write_bytes(out, b->data(), n * sizeof(double));
        h = fnv1a_doubles(b->data(), n, h);
    }
    write_bytes(out, &h, sizeof h);
    if (!out) throw ConfigError("save_policy: write failed for " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("load_policy: cannot open " + path.string());

    char magic[sizeof kCheckpointMagic];
    read_bytes(in, magic, sizeof magic, path.string());
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
        throw ParseError("load_policy: bad magic in " + path.string());
    }
    std::uint32_t n_blocks = 0;
    read_bytes(in, &n_blocks, sizeof n_blocks, path.string());
    if (n_blocks != kPolicyBlockCount) {
        throw ParseError("load_policy: unexpected block count in " + path.string());
    }

    PolicyParams p;
    auto blocks = param_blocks(p);
    std::array<std::pair<std::uint32_t, std::uint32_t>, kPolicyBlockCount> shapes;
    for (auto& [rows, cols] : shapes) {
        read_bytes(in, &rows, sizeof rows, path.string());
        read_bytes(in, &cols, sizeof cols, path.string());
    }
    std::uint64_t h = kFnvOffset;
    for (int i = 0; i < kPolicyBlockCount; ++i) {
        const auto [rows, cols] = shapes[static_cast<std::size_t>(i)];
        Eigen::MatrixXd* b = blocks[static_cast<std::size_t>(i)];
        b->resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        const std::size_t n = static_cast<std::size_t>(b->size());
        read_bytes(in, b->data(), n * sizeof(double), path.string());
        h = fnv1a_doubles(b->data(), n, h);
    }
    std::uint64_t stored = 0;
    read_bytes(in, &stored, sizeof stored, path.string());
    if (stored != h) throw ParseError("load_policy: checksum mismatch in " + path.string());
    return p;
}

namespace {

void run_warm_start(PolicyParams& p, const Vocabulary& vocab, std::uint64_t seed) {
    auto stream = rng::derive_stream({seed, kWarmStartSalt});
    AdamState adam;
    for (int step = 0; step < kWarmStartSteps; ++step) {
        PolicyParams grad = zeros_like(p);
        for (int i = 0; i < kWarmStartBatch; ++i) {
            const int shown = static_cast<int>(stream.uniform_int(0, kMaxAnswer));
            int in_prompt = shown;
            if (stream.next_double() < kWarmStartDistractorProb) {
                // Distractor digits in the prompt, as in vision-dominant
                // queries; the boxed target always follows the context.
                const std::string gold = std::to_string(shown);
                for (;;) {
                    const int d = static_cast<int>(stream.uniform_int(0, kMaxAnswer));
                    const std::string s = std::to_string(d);
                    if (s.find(gold) == std::string::npos &&
                        gold.find(s) == std::string::npos) {
                        in_prompt = d;
                        break;
                    }
                }
            }
            const int boxed = shown;
            const std::vector<int> prompt =
                prompt_skeleton(answer_digit_tokens(in_prompt, vocab), vocab);
            const Eigen::VectorXd ctx = encode_context(shown, stream);

            std::vector<int> target;
            target.push_back(vocab.box_open());
            const std::vector<int> digits = answer_digit_tokens(boxed, vocab);
            target.insert(target.end(), digits.begin(), digits.end());
            target.push_back(vocab.brace_close());
            target.push_back(vocab.eos());

            const SeqForward f = forward_seq(p, prompt, ctx, target);
            const double coeff =
                -1.0 / (static_cast<double>(kWarmStartBatch) * static_cast<double>(target.size()));
            const Eigen::VectorXd dloss =
                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(target.size()), coeff);
            backward_seq(p, f, ctx, target, dloss, grad);
        }
        auto params = param_blocks(p);
        auto grads = param_blocks(static_cast<const PolicyParams&>(grad));
        const double progress = static_cast<double>(step) / kWarmStartSteps;
        const double lr =
            kWarmStartLr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
        optimizer_step(params, grads, adam, lr, 1.0);
    }
}

}  // namespace

}  // namespace maye
