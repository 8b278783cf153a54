#pragma once

// Preference losses: plain DPO, token-weighted DPO, the two auxiliary losses
// (contrastive suppression, reward enhancement), their combination, and the
// random-weight baseline.
//
// The weighted and unweighted preference paths are one code path: the plain
// loss passes all-ones weights, and since x * 1.0 == x bitwise, the reduction
// to DPO is exact by construction rather than by tolerance.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "aao/ambiguity.hpp"
#include "aao/errors.hpp"
#include "aao/model.hpp"
#include "aao/tensor.hpp"

namespace aao {

enum class WeightApplication { log_probs, raw_logits };
enum class EmbeddingSource { input_table, final_hidden };

struct LossConfig {
    double beta = 0.1;
    double alpha = kDefaultAlpha;
    double lambda_aux = 1.0;
    WeightApplication weight_application = WeightApplication::log_probs;
    EmbeddingSource embedding_source = EmbeddingSource::input_table;
    bool weight_reference = true;  // apply weights to the reference sums too
};

struct LossBreakdown {
    Tensor total;              // scalar, lives on the tape
    double preference = 0.0;   // -log sigmoid(margin)
    double contrastive = 0.0;
    double reward = 0.0;
    double margin = 0.0;       // beta-scaled log-ratio difference
};

// One forward pass with everything later stages need: full logits, final
// hidden states, and the row indices that emit each response token.
struct SequencePass {
    Tensor logits;  // T x V
    Tensor hidden;  // T x d
    std::vector<int> predictor_rows;       // row P-1+i emits response token i
    std::vector<std::size_t> token_rows;   // 0..K-1, pairs with response ids
    std::vector<int> response;
};

struct PairActivation {
    SequencePass pol_chosen, pol_rejected;
    SequencePass ref_chosen, ref_rejected;
};

namespace detail {

inline SequencePass run_sequence(const TinyCausalLM& m, const std::vector<int>& prompt,
                                 const std::vector<int>& response, Tape* tape) {
    if (response.empty()) throw contract_error("preference loss: empty response");
    if (prompt.empty()) throw contract_error("preference loss: empty prompt");
    std::vector<int> ids(prompt);
    ids.insert(ids.end(), response.begin(), response.end());
    ForwardResult fr = m.forward(ids, tape);
    SequencePass sp;
    sp.logits = fr.logits;
    sp.hidden = fr.hidden;
    sp.response = response;
    sp.predictor_rows.resize(response.size());
    sp.token_rows.resize(response.size());
    for (std::size_t i = 0; i < response.size(); ++i) {
        sp.predictor_rows[i] = static_cast<int>(prompt.size() - 1 + i);
        sp.token_rows[i] = i;
    }
    return sp;
}

// Per-token response log-probs of one pass, weighted per the configured
// application point. Softmax is evaluated only on the response-emitting rows.
inline Tensor weighted_response_lp(const SequencePass& sp, const Tensor& w,
                                   WeightApplication app, Tape* tape) {
    if (w.numel() != sp.response.size())
        throw contract_error("preference loss: " + std::to_string(w.numel()) +
                             " weights for a " + std::to_string(sp.response.size()) +
                             "-token response");
    Tensor rows = gather_rows(sp.logits, sp.predictor_rows, tape);
    if (app == WeightApplication::raw_logits) rows = mul_col_broadcast(rows, w, tape);
    Tensor lp = gather_nd(log_softmax_rows(rows, tape), sp.token_rows, sp.response, tape);
    if (app == WeightApplication::log_probs) lp = mul(lp, w, tape);
    return lp;
}

inline Tensor ones_like_response(const std::vector<int>& response) {
    return Tensor::full({response.size()}, 1.0);
}

}  // namespace detail

inline PairActivation run_pair(const TinyCausalLM& policy, const TinyCausalLM& reference,
                               const PreferencePair& pair, Tape* tape) {
    PairActivation act;
    act.pol_chosen = detail::run_sequence(policy, pair.prompt_tokens, pair.chosen_tokens, tape);
    act.pol_rejected = detail::run_sequence(policy, pair.prompt_tokens, pair.rejected_tokens, tape);
    act.ref_chosen = detail::run_sequence(reference, pair.prompt_tokens, pair.chosen_tokens, tape);
    act.ref_rejected =
        detail::run_sequence(reference, pair.prompt_tokens, pair.rejected_tokens, tape);
    return act;
}

// beta * [(log pi(y_w) - log ref(y_w)) - (log pi(y_l) - log ref(y_l))], with
// every per-token log-prob scaled by its token weight first (reference too,
// unless the config opts out).
inline Tensor weighted_margin(const PairActivation& act, const Tensor& w_chosen,
                              const Tensor& w_rejected, const LossConfig& cfg, Tape* tape) {
    const auto app = cfg.weight_application;
    Tensor pol_w = sum_all(detail::weighted_response_lp(act.pol_chosen, w_chosen, app, tape), tape);
    Tensor pol_l =
        sum_all(detail::weighted_response_lp(act.pol_rejected, w_rejected, app, tape), tape);
    Tensor rw = cfg.weight_reference ? w_chosen : detail::ones_like_response(act.ref_chosen.response);
    Tensor rl =
        cfg.weight_reference ? w_rejected : detail::ones_like_response(act.ref_rejected.response);
    Tensor ref_w = sum_all(detail::weighted_response_lp(act.ref_chosen, rw, app, tape), tape);
    Tensor ref_l = sum_all(detail::weighted_response_lp(act.ref_rejected, rl, app, tape), tape);
    Tensor diff = sub(sub(pol_w, ref_w, tape), sub(pol_l, ref_l, tape), tape);
    return scale(diff, cfg.beta, tape);
}

inline LossBreakdown preference_loss(const PairActivation& act, const Tensor& w_chosen,
                                     const Tensor& w_rejected, const LossConfig& cfg, Tape* tape) {
    if (!(cfg.beta > 0.0)) throw contract_error("preference loss: beta must be positive");
    Tensor margin = weighted_margin(act, w_chosen, w_rejected, cfg, tape);
    LossBreakdown out;
    out.total = neg(log_sigmoid(margin, tape), tape);
    out.margin = margin.item();
    out.preference = out.total.item();
    return out;
}

inline LossBreakdown aao_loss(const TinyCausalLM& policy, const TinyCausalLM& reference,
                              const PreferencePair& pair, const TokenWeights& weights, double beta,
                              Tape* tape = nullptr, const LossConfig& base = LossConfig{}) {
    LossConfig cfg = base;
    cfg.beta = beta;
    PairActivation act = run_pair(policy, reference, pair, tape);
    return preference_loss(act, weights.chosen, weights.rejected, cfg, tape);
}

inline LossBreakdown dpo_loss(const TinyCausalLM& policy, const TinyCausalLM& reference,
                              const PreferencePair& pair, double beta, Tape* tape = nullptr,
                              const LossConfig& base = LossConfig{}) {
    TokenWeights ones;
    ones.chosen = detail::ones_like_response(pair.chosen_tokens);
    ones.rejected = detail::ones_like_response(pair.rejected_tokens);
    return aao_loss(policy, reference, pair, ones, beta, tape, base);
}

// Mean pairwise cosine between weight-scaled embedding rows of the two
// answers, summed over both directions. Zero-weighted rows are skipped; a side
// with no surviving rows is degenerate. The two directional means are
// redundant by symmetry and are both computed and cross-checked.
inline Tensor contrastive_suppression_loss(const Tensor& e_w, const Tensor& w_w, const Tensor& e_l,
                                           const Tensor& w_l, Tape* tape = nullptr) {
    if (e_w.rank() != 2 || e_l.rank() != 2 || e_w.cols() != e_l.cols())
        throw shape_error("contrastive loss: " + shape_str(e_w.shape()) + " vs " +
                          shape_str(e_l.shape()));
    if (w_w.numel() != e_w.rows() || w_l.numel() != e_l.rows())
        throw contract_error("contrastive loss: weight/row count mismatch");

    Tensor sw = mul_col_broadcast(e_w, w_w, tape);
    Tensor sl = mul_col_broadcast(e_l, w_l, tape);

    auto live_rows = [](const Tensor& m, const char* side) {
        std::vector<int> live;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < m.cols(); ++j) norm2 += m.at(i, j) * m.at(i, j);
            if (norm2 > 0.0) live.push_back(static_cast<int>(i));
        }
        if (live.empty())
            throw degenerate_input_error(std::string("contrastive loss: every weighted ") + side +
                                         " row is zero");
        return live;
    };
    const std::vector<int> lw = live_rows(sw, "chosen");
    const std::vector<int> ll = live_rows(sl, "rejected");

    // Unit-normalize the live rows so one matmul per direction yields every
    // pairwise cosine at once; the backward sweep then scales with the number
    // of rows instead of the number of pairs. Live rows have nonzero norm by
    // construction, so the normalization cannot divide by zero.
    auto unit_rows = [tape](const Tensor& m, const std::vector<int>& live) {
        Tensor g = gather_rows(m, live, tape);
        Tensor inv = recip(sqrt(row_sums(mul(g, g, tape), tape), tape), tape);
        return mul_col_broadcast(g, inv, tape);
    };
    Tensor uw = unit_rows(sw, lw);
    Tensor ul = unit_rows(sl, ll);

    const double denom = static_cast<double>(lw.size()) * static_cast<double>(ll.size());
    Tensor s_pref =
        scale(sum_all(matmul(uw, transpose(ul, tape), tape), tape), 1.0 / denom, tape);
    Tensor s_dis =
        scale(sum_all(matmul(ul, transpose(uw, tape), tape), tape), 1.0 / denom, tape);
    if (std::fabs(s_pref.item() - s_dis.item()) > 1e-12)
        throw contract_error("contrastive loss: directional means diverged");
    return add(s_pref, s_dis, tape);
}

// -sum_t w_t * log P(chosen_t); pulls probability mass toward every chosen
// token that still carries weight.
inline Tensor reward_enhancement_loss_from(const SequencePass& pol_chosen, const Tensor& w_chosen,
                                           Tape* tape = nullptr) {
    Tensor lp =
        detail::weighted_response_lp(pol_chosen, w_chosen, WeightApplication::log_probs, tape);
    return neg(sum_all(lp, tape), tape);
}

inline Tensor reward_enhancement_loss(const TinyCausalLM& policy, const PreferencePair& pair,
                                      const TokenWeights& weights, Tape* tape = nullptr) {
    SequencePass sp = detail::run_sequence(policy, pair.prompt_tokens, pair.chosen_tokens, tape);
    return reward_enhancement_loss_from(sp, weights.chosen, tape);
}

// Embedding rows feeding similarity and the contrastive loss, per source.
inline Tensor answer_embeddings(const TinyCausalLM& policy, const SequencePass& sp,
                                const std::vector<int>& response_tokens, EmbeddingSource src,
                                Tape* tape) {
    if (src == EmbeddingSource::input_table) return gather_rows(policy.table, response_tokens, tape);
    std::vector<int> rows(sp.predictor_rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = sp.predictor_rows[i] + 1;
    return gather_rows(sp.hidden, rows, tape);
}

// Preference term plus lambda_aux * (contrastive + reward), weights from the
// smooth curve (training always differentiates through the weighting).
inline LossBreakdown total_loss_from(const PairActivation& act, const Tensor& e_w,
                                     const Tensor& e_l, const AmbiguityScores& scores,
                                     const Thresholds& th, const LossConfig& cfg,
                                     Tape* tape = nullptr, TokenWeights* weights_out = nullptr) {
    TokenWeights w = token_weights(scores, th, WeightMode::smooth, cfg.alpha, tape);
    LossBreakdown out = preference_loss(act, w.chosen, w.rejected, cfg, tape);
    Tensor contrastive = contrastive_suppression_loss(e_w, w.chosen, e_l, w.rejected, tape);
    Tensor reward = reward_enhancement_loss_from(act.pol_chosen, w.chosen, tape);
    out.contrastive = contrastive.item();
    out.reward = reward.item();
    out.total =
        add(out.total, scale(add(contrastive, reward, tape), cfg.lambda_aux, tape), tape);
    if (weights_out) *weights_out = w;
    return out;
}

inline LossBreakdown total_loss(const TinyCausalLM& policy, const TinyCausalLM& reference,
                                const PreferencePair& pair, const AmbiguityScores& scores,
                                const Thresholds& th, const LossConfig& cfg,
                                Tape* tape = nullptr) {
    PairActivation act = run_pair(policy, reference, pair, tape);
    Tensor e_w = answer_embeddings(policy, act.pol_chosen, pair.chosen_tokens,
                                   cfg.embedding_source, tape);
    Tensor e_l = answer_embeddings(policy, act.pol_rejected, pair.rejected_tokens,
                                   cfg.embedding_source, tape);
    return total_loss_from(act, e_w, e_l, scores, th, cfg, tape);
}

// Deterministic i.i.d. uniform [0,2] weights (mean 1), keyed by pair content
// and seed.
inline TokenWeights random_weights(const PreferencePair& pair, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull;
    auto eat = [&](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xffull;
            h *= 1099511628211ull;
        }
    };
    eat(seed);
    auto eat_list = [&](const std::vector<int>& v) {
        eat(v.size());
        for (int id : v) eat(static_cast<std::uint64_t>(id));
    };
    eat_list(pair.prompt_tokens);
    eat_list(pair.chosen_tokens);
    eat_list(pair.rejected_tokens);

    std::mt19937_64 rng(h);
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    TokenWeights w;
    w.chosen = Tensor::zeros({pair.chosen_tokens.size()});
    for (std::size_t i = 0; i < w.chosen.numel(); ++i) w.chosen.at(i) = uni(rng);
    w.rejected = Tensor::zeros({pair.rejected_tokens.size()});
    for (std::size_t i = 0; i < w.rejected.numel(); ++i) w.rejected.at(i) = uni(rng);
    return w;
}

}  // namespace aao
