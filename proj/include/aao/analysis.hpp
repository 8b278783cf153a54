#pragma once

// Diagnostic probes: common-token gradient cancellation between the chosen and
// rejected sides of the preference loss, the confidence "squeeze" under
// training, and a small margin/accuracy evaluator.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "aao/errors.hpp"
#include "aao/losses.hpp"
#include "aao/model.hpp"
#include "aao/tensor.hpp"

namespace aao {

struct CancellationReport {
    int common_token_id = -1;
    std::size_t position_in_chosen = 0;
    std::size_t position_in_rejected = 0;
    double grad_cosine = 0.0;   // alignment of the two contributions
    double residual_norm = 0.0; // |g_chosen + g_rejected|, minus sign included
    double norm_chosen = 0.0;
    double norm_rejected = 0.0;
};

namespace detail {

inline std::size_t find_token(const std::vector<int>& response, int token, const char* side) {
    for (std::size_t i = 0; i < response.size(); ++i)
        if (response[i] == token) return i;
    throw contract_error("cancellation probe: token " + std::to_string(token) + " absent from " +
                         side + " response");
}

inline std::vector<double> flat_grads(const TinyCausalLM& m) {
    std::vector<double> out;
    for (const auto& p : m.params()) out.insert(out.end(), p.grad().begin(), p.grad().end());
    return out;
}

inline void zero_grads(const TinyCausalLM& m) {
    for (const auto& p : m.params()) p.zero_grad();
}

// Gradient of seed * log P(response[pos] | prompt, response[<pos]) w.r.t. all
// model parameters. Every other position is excluded from the scalar, so this
// is exactly one token's contribution.
inline std::vector<double> single_token_grad(const TinyCausalLM& m, const std::vector<int>& prompt,
                                             const std::vector<int>& response, std::size_t pos,
                                             double seed) {
    zero_grads(m);
    Tape tape;
    Tensor lp = per_token_log_probs(m, prompt, response, &tape);
    Tensor one = gather_nd(reshape(lp, {lp.numel(), 1}, &tape), {pos}, {0}, &tape);
    tape.backward(reshape(one, {}, &tape), seed);
    return flat_grads(m);
}

}  // namespace detail

// Isolates the gradient contribution of one common token on each side of the
// pair (chosen carries +, rejected carries the preference loss's minus sign)
// and reports how the two contributions align.
inline CancellationReport cancellation_probe(const TinyCausalLM& model,
                                             const std::vector<int>& prompt,
                                             const std::vector<int>& chosen,
                                             const std::vector<int>& rejected, int common_token,
                                             const TokenWeights* weights = nullptr) {
    CancellationReport rep;
    rep.common_token_id = common_token;
    rep.position_in_chosen = detail::find_token(chosen, common_token, "chosen");
    rep.position_in_rejected = detail::find_token(rejected, common_token, "rejected");

    const double w_c = weights ? weights->chosen.at(rep.position_in_chosen) : 1.0;
    const double w_l = weights ? weights->rejected.at(rep.position_in_rejected) : 1.0;

    const std::vector<double> g_w =
        detail::single_token_grad(model, prompt, chosen, rep.position_in_chosen, w_c);
    const std::vector<double> g_l =
        detail::single_token_grad(model, prompt, rejected, rep.position_in_rejected, -w_l);
    detail::zero_grads(model);

    double nw = 0.0, nl = 0.0, dot = 0.0, res = 0.0;
    for (std::size_t i = 0; i < g_w.size(); ++i) {
        nw += g_w[i] * g_w[i];
        nl += g_l[i] * g_l[i];
        dot += g_w[i] * g_l[i];
        const double s = g_w[i] + g_l[i];
        res += s * s;
    }
    rep.norm_chosen = std::sqrt(nw);
    rep.norm_rejected = std::sqrt(nl);
    rep.residual_norm = std::sqrt(res);
    rep.grad_cosine =
        (nw == 0.0 || nl == 0.0) ? 0.0 : dot / (rep.norm_chosen * rep.norm_rejected);
    return rep;
}

struct SqueezePoint {
    std::size_t step = 0;
    double mean_top1 = 0.0;
};

struct SqueezeTrace {
    std::string method;
    std::vector<SqueezePoint> points;
};

constexpr std::size_t kSqueezeHorizon = 32;

// Greedy-decodes a fixed horizon from each prompt and averages the softmax
// probability of the argmax token over every generation position. Decoding
// ignores EOS (fixed horizon) and stops early only at the context boundary.
inline double squeeze_probe(const TinyCausalLM& policy,
                            const std::vector<std::vector<int>>& prompts, std::size_t step,
                            SqueezeTrace& trace, std::size_t horizon = kSqueezeHorizon) {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& prompt : prompts) {
        if (prompt.empty()) throw contract_error("squeeze probe: empty prompt");
        std::vector<int> ids(prompt);
        for (std::size_t t = 0; t < horizon && ids.size() < policy.shape.context_len; ++t) {
            Tensor logits = policy.forward(ids).logits;
            const std::size_t last = logits.rows() - 1;
            const std::size_t v = logits.cols();
            double mx = logits.at(last, 0);
            std::size_t arg = 0;
            for (std::size_t j = 1; j < v; ++j)
                if (logits.at(last, j) > mx) {
                    mx = logits.at(last, j);
                    arg = j;
                }
            double z = 0.0;
            for (std::size_t j = 0; j < v; ++j) z += std::exp(logits.at(last, j) - mx);
            acc += 1.0 / z;  // exp(mx - mx) / z
            ++count;
            ids.push_back(static_cast<int>(arg));
        }
    }
    if (count == 0) throw contract_error("squeeze probe: nothing decoded");
    const double mean = acc / static_cast<double>(count);
    trace.points.push_back({step, mean});
    return mean;
}

struct PreferenceSummary {
    double mean_margin = 0.0;
    double accuracy = 0.0;  // fraction of pairs with margin strictly > 0
    std::size_t pairs = 0;
};

// Unweighted DPO margins over an evaluation set.
inline PreferenceSummary preference_metrics(const TinyCausalLM& policy,
                                            const TinyCausalLM& reference,
                                            const std::vector<PreferencePair>& eval_pairs,
                                            double beta) {
    if (eval_pairs.empty()) throw contract_error("preference_metrics: empty evaluation set");
    PreferenceSummary out;
    out.pairs = eval_pairs.size();
    std::size_t wins = 0;
    for (const auto& pair : eval_pairs) {
        const LossBreakdown lb = dpo_loss(policy, reference, pair, beta);
        out.mean_margin += lb.margin;
        if (lb.margin > 0.0) ++wins;
    }
    out.mean_margin /= static_cast<double>(out.pairs);
    out.accuracy = static_cast<double>(wins) / static_cast<double>(out.pairs);
    return out;
}

}  // namespace aao
