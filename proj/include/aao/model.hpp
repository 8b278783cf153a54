#pragma once

// Tiny decoder-only causal language model: token embeddings, num_blocks
// single-head attention blocks with two-layer feed-forwards and residuals, and
// an output head (optionally tied to the embedding table). No positional
// encoding and no normalization layers -- at this scale neither is needed, and
// their absence keeps the arithmetic easy to audit.
//
// Causality is enforced with an additive -1e9 mask before the row softmax;
// masked attention weights underflow to exactly +0.0, so logits at position t
// are bitwise independent of tokens after t.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "aao/errors.hpp"
#include "aao/tensor.hpp"

namespace aao {

struct ModelShape {
    std::size_t vocab_size = 260;
    std::size_t embed_dim = 64;
    std::size_t context_len = 256;
    std::size_t num_blocks = 2;
    bool tie_output = false;
};

struct BlockParams {
    Tensor wq, wk, wv, wo;  // embed_dim x embed_dim
    Tensor ff1_w;           // embed_dim x 4*embed_dim
    Tensor ff1_b;           // 4*embed_dim
    Tensor ff2_w;           // 4*embed_dim x embed_dim
    Tensor ff2_b;           // embed_dim
};

struct ForwardResult {
    Tensor hidden;  // T x embed_dim, final residual stream
    Tensor logits;  // T x vocab_size
};

// The unit of training: a prompt with its preferred and dispreferred response.
struct PreferencePair {
    std::vector<int> prompt_tokens;
    std::vector<int> chosen_tokens;    // length >= 1
    std::vector<int> rejected_tokens;  // length >= 1
};

inline void validate_pair(const PreferencePair& p, const ModelShape& shape) {
    if (p.chosen_tokens.empty() || p.rejected_tokens.empty())
        throw contract_error("preference pair: responses must be nonempty");
    auto check_ids = [&](const std::vector<int>& ids, const char* what) {
        for (int id : ids)
            if (id < 0 || static_cast<std::size_t>(id) >= shape.vocab_size)
                throw vocab_error(std::string("preference pair: ") + what + " id " +
                                  std::to_string(id) + " outside vocab of " +
                                  std::to_string(shape.vocab_size));
    };
    check_ids(p.prompt_tokens, "prompt");
    check_ids(p.chosen_tokens, "chosen");
    check_ids(p.rejected_tokens, "rejected");
    const std::size_t longest = std::max(p.chosen_tokens.size(), p.rejected_tokens.size());
    if (p.prompt_tokens.size() + longest > shape.context_len)
        throw contract_error("preference pair: prompt + longest response of " +
                             std::to_string(p.prompt_tokens.size() + longest) +
                             " tokens exceeds context of " + std::to_string(shape.context_len));
}

class TinyCausalLM {
public:
    ModelShape shape;
    Tensor table;  // vocab_size x embed_dim
    std::vector<BlockParams> blocks;
    Tensor head;  // embed_dim x vocab_size; unused when tied

    TinyCausalLM() = default;

    // Deterministic Gaussian init (std 0.02). Embedding rows are re-drawn
    // until their norm clears 1e-6 so every row is a valid cosine operand.
    // Biases start at zero. Draw order is fixed, so (shape, seed) pins every
    // parameter bit.
    static TinyCausalLM init(const ModelShape& shape, std::uint64_t seed) {
        TinyCausalLM m;
        m.shape = shape;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 0.02);

        m.table = Tensor::zeros({shape.vocab_size, shape.embed_dim}, true);
        for (std::size_t r = 0; r < shape.vocab_size; ++r) {
            double norm2 = 0.0;
            do {
                norm2 = 0.0;
                for (std::size_t c = 0; c < shape.embed_dim; ++c) {
                    const double x = gauss(rng);
                    m.table.at(r, c) = x;
                    norm2 += x * x;
                }
            } while (norm2 <= 1e-12);  // norm > 1e-6
        }

        auto dense = [&](std::size_t rows, std::size_t cols) {
            Tensor t = Tensor::zeros({rows, cols}, true);
            for (std::size_t i = 0; i < rows * cols; ++i) t.at(i) = gauss(rng);
            return t;
        };

        const std::size_t d = shape.embed_dim, f = 4 * shape.embed_dim;
        for (std::size_t b = 0; b < shape.num_blocks; ++b) {
            BlockParams blk;
            blk.wq = dense(d, d);
            blk.wk = dense(d, d);
            blk.wv = dense(d, d);
            blk.wo = dense(d, d);
            blk.ff1_w = dense(d, f);
            blk.ff1_b = Tensor::zeros({f}, true);
            blk.ff2_w = dense(f, d);
            blk.ff2_b = Tensor::zeros({d}, true);
            m.blocks.push_back(std::move(blk));
        }
        if (!shape.tie_output) m.head = dense(d, shape.vocab_size);
        return m;
    }

    // Trainable parameters in a fixed order (also the checkpoint order).
    std::vector<Tensor> params() const {
        std::vector<Tensor> out;
        out.push_back(table);
        for (const auto& b : blocks) {
            out.push_back(b.wq);
            out.push_back(b.wk);
            out.push_back(b.wv);
            out.push_back(b.wo);
            out.push_back(b.ff1_w);
            out.push_back(b.ff1_b);
            out.push_back(b.ff2_w);
            out.push_back(b.ff2_b);
        }
        if (!shape.tie_output) out.push_back(head);
        return out;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& p : params()) n += p.numel();
        return n;
    }

    // Deep copy with gradient tracking switched as requested.
    TinyCausalLM clone(bool requires_grad) const {
        TinyCausalLM m;
        m.shape = shape;
        auto cp = [&](const Tensor& t) {
            Tensor c = t.clone_detached();
            c.set_requires_grad(requires_grad);
            return c;
        };
        m.table = cp(table);
        for (const auto& b : blocks) {
            BlockParams nb;
            nb.wq = cp(b.wq);
            nb.wk = cp(b.wk);
            nb.wv = cp(b.wv);
            nb.wo = cp(b.wo);
            nb.ff1_w = cp(b.ff1_w);
            nb.ff1_b = cp(b.ff1_b);
            nb.ff2_w = cp(b.ff2_w);
            nb.ff2_b = cp(b.ff2_b);
            m.blocks.push_back(std::move(nb));
        }
        if (!shape.tie_output) m.head = cp(head);
        return m;
    }

    // Full forward pass over a token sequence.
    ForwardResult forward(const std::vector<int>& ids, Tape* tape = nullptr) const {
        if (ids.empty()) throw contract_error("forward: empty token sequence");
        if (ids.size() > shape.context_len)
            throw contract_error("forward: sequence of " + std::to_string(ids.size()) +
                                 " tokens exceeds context of " + std::to_string(shape.context_len));
        const std::size_t T = ids.size();
        const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(shape.embed_dim));

        Tensor x = gather_rows(table, ids, tape);

        Tensor mask;  // shared across blocks; 0 on/below diagonal, -1e9 above
        if (shape.num_blocks > 0) {
            mask = Tensor::zeros({T, T});
            for (std::size_t i = 0; i < T; ++i)
                for (std::size_t j = i + 1; j < T; ++j) mask.at(i, j) = -1e9;
        }

        for (const auto& blk : blocks) {
            Tensor q = matmul(x, blk.wq, tape);
            Tensor k = matmul(x, blk.wk, tape);
            Tensor v = matmul(x, blk.wv, tape);
            Tensor scores = scale(matmul(q, transpose(k, tape), tape), inv_sqrt_d, tape);
            scores = add(scores, mask, tape);
            Tensor attn = exp(log_softmax_rows(scores, tape), tape);
            Tensor mixed = matmul(matmul(attn, v, tape), blk.wo, tape);
            x = add(x, mixed, tape);

            Tensor h = relu(add_row_broadcast(matmul(x, blk.ff1_w, tape), blk.ff1_b, tape), tape);
            Tensor ff = add_row_broadcast(matmul(h, blk.ff2_w, tape), blk.ff2_b, tape);
            x = add(x, ff, tape);
        }

        ForwardResult out;
        out.hidden = x;
        out.logits = shape.tie_output ? matmul(x, transpose(table, tape), tape)
                                      : matmul(x, head, tape);
        return out;
    }
};

// Frozen deep copy serving as the fixed likelihood baseline. Gradient
// computation through its parameters is structurally impossible: they do not
// track gradients, so no primitive records pullbacks for them.
inline TinyCausalLM make_reference(const TinyCausalLM& policy) { return policy.clone(false); }

// Raw input-embedding rows for a token list. Empty list gives a 0 x d matrix.
inline Tensor embed(const TinyCausalLM& m, const std::vector<int>& tokens, Tape* tape = nullptr) {
    return gather_rows(m.table, tokens, tape);
}

// log P(response[i] | prompt, response[<i]) for each response token.
inline Tensor per_token_log_probs(const TinyCausalLM& m, const std::vector<int>& prompt,
                                  const std::vector<int>& response, Tape* tape = nullptr) {
    if (response.empty()) throw contract_error("per_token_log_probs: empty response");
    if (prompt.empty()) throw contract_error("per_token_log_probs: empty prompt");
    std::vector<int> ids(prompt);
    ids.insert(ids.end(), response.begin(), response.end());
    ForwardResult fr = m.forward(ids, tape);
    Tensor lp = log_softmax_rows(fr.logits, tape);
    std::vector<std::size_t> rows(response.size());
    for (std::size_t i = 0; i < response.size(); ++i) rows[i] = prompt.size() - 1 + i;
    return gather_nd(lp, rows, response, tape);
}

inline Tensor sequence_log_prob(const TinyCausalLM& m, const std::vector<int>& prompt,
                                const std::vector<int>& response, Tape* tape = nullptr) {
    return sum_all(per_token_log_probs(m, prompt, response, tape), tape);
}

// FNV-1a over the raw parameter bytes in fixed order; used to assert that the
// reference stays frozen across a run.
inline std::uint64_t params_hash(const TinyCausalLM& m) {
    std::uint64_t h = 1469598103934665603ull;
    auto eat = [&](const Tensor& t) {
        for (double x : t.values()) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(x));
            std::memcpy(&bits, &x, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xffull;
                h *= 1099511628211ull;
            }
        }
    };
    for (const auto& p : m.params()) eat(p);
    return h;
}

}  // namespace aao
