#pragma once

// Per-token ambiguity scores, the adaptive threshold head, and the two
// weighting curves (piecewise and its smooth sigmoid approximation).
//
// Scores: each token of one answer gets the maximum cosine similarity against
// every token of the other answer; the raw maxima are then min-max normalized
// within their own answer. A raw range below 1e-9 carries no relative signal,
// so all scores collapse to the neutral 0.5.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aao/errors.hpp"
#include "aao/tensor.hpp"

namespace aao {

constexpr double kDegenerateRange = 1e-9;
constexpr double kThresholdGap = 1e-3;
constexpr double kDefaultAlpha = 200.0;

struct AmbiguityScores {
    Tensor raw_chosen;   // unnormalized per-token max similarities
    Tensor raw_rejected;
    Tensor chosen;       // min-max normalized within the answer, in [0,1]
    Tensor rejected;
};

struct Thresholds {
    Tensor a;  // rank-0
    Tensor b;  // rank-0
    double a_value() const { return a.item(); }
    double b_value() const { return b.item(); }
};

struct TokenWeights {
    Tensor chosen;
    Tensor rejected;
};

enum class WeightMode { piecewise, smooth };

namespace detail {

// Rows scaled to unit norm; rejects zero-norm rows.
inline Tensor normalize_rows(const Tensor& e, const char* side, Tape* tape) {
    Tensor sq = row_sums(mul(e, e, tape), tape);
    for (std::size_t i = 0; i < sq.numel(); ++i)
        if (sq.at(i) == 0.0)
            throw degenerate_input_error(std::string("ambiguity_scores: zero-norm embedding row ") +
                                         std::to_string(i) + " in " + side + " answer");
    return mul_col_broadcast(e, recip(sqrt(sq, tape), tape), tape);
}

// Min-max normalization of raw maxima within one answer, with the
// degenerate-range collapse to 0.5 (constant, so no gradient there).
inline Tensor normalize_scores(const Tensor& raw, Tape* tape) {
    Tensor lo = reduce_min(raw, tape);
    Tensor hi = reduce_max(raw, tape);
    if (hi.item() - lo.item() < kDegenerateRange)
        return Tensor::full({raw.numel()}, 0.5);
    return div_scalar(sub_scalar(raw, lo, tape), sub(hi, lo, tape), tape);
}

}  // namespace detail

// Cross-answer similarity scores for both answers of a pair. E_w and E_l hold
// one embedding row per token of the chosen / rejected answer.
inline AmbiguityScores ambiguity_scores(const Tensor& e_w, const Tensor& e_l,
                                        Tape* tape = nullptr) {
    if (e_w.rank() != 2 || e_l.rank() != 2 || e_w.cols() != e_l.cols())
        throw shape_error("ambiguity_scores: " + shape_str(e_w.shape()) + " vs " +
                          shape_str(e_l.shape()));
    if (e_w.rows() == 0 || e_l.rows() == 0)
        throw contract_error("ambiguity_scores: each answer needs at least one token");

    Tensor u_w = detail::normalize_rows(e_w, "chosen", tape);
    Tensor u_l = detail::normalize_rows(e_l, "rejected", tape);
    Tensor sim = matmul(u_w, transpose(u_l, tape), tape);  // K_w x K_l of cosines

    AmbiguityScores s;
    s.raw_chosen = row_max(sim, tape);
    s.raw_rejected = row_max(transpose(sim, tape), tape);
    s.chosen = detail::normalize_scores(s.raw_chosen, tape);
    s.rejected = detail::normalize_scores(s.raw_rejected, tape);
    return s;
}

// Two-layer perceptron mapping pooled logits to the threshold pair. Hidden
// layer uses tanh; both outputs pass through the logistic function, so they
// stay inside (0,1).
struct ThresholdHead {
    Tensor w1;  // vocab x hidden
    Tensor b1;  // hidden
    Tensor w2;  // hidden x 2
    Tensor b2;  // 2

    static ThresholdHead init(std::size_t vocab, std::size_t hidden, std::uint64_t seed) {
        ThresholdHead h = zeros(vocab, hidden);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 0.02);
        for (std::size_t i = 0; i < h.w1.numel(); ++i) h.w1.at(i) = gauss(rng);
        for (std::size_t i = 0; i < h.w2.numel(); ++i) h.w2.at(i) = gauss(rng);
        return h;
    }

    // All-zero parameters; produces thresholds (0.5, 0.5 - gap).
    static ThresholdHead zeros(std::size_t vocab, std::size_t hidden) {
        ThresholdHead h;
        h.w1 = Tensor::zeros({vocab, hidden}, true);
        h.b1 = Tensor::zeros({hidden}, true);
        h.w2 = Tensor::zeros({hidden, 2}, true);
        h.b2 = Tensor::zeros({2}, true);
        return h;
    }

    std::vector<Tensor> params() const { return {w1, b1, w2, b2}; }

    std::size_t param_count() const {
        return w1.numel() + b1.numel() + w2.numel() + b2.numel();
    }

    std::size_t hidden_width() const { return b1.numel(); }
    std::size_t input_width() const { return w1.rows(); }
};

// Mean-pools logits over positions, runs the head, and orders the two outputs
// into a > b with a minimum gap (b <- min(b, a - 1e-3), clipped at 0).
inline Thresholds adaptive_thresholds(const ThresholdHead& head, const Tensor& logits,
                                      Tape* tape = nullptr) {
    if (logits.rank() != 2 || logits.cols() != head.input_width())
        throw shape_error("adaptive_thresholds: logits " + shape_str(logits.shape()) +
                          " vs head input width " + std::to_string(head.input_width()));
    if (logits.rows() == 0) throw contract_error("adaptive_thresholds: no positions to pool");

    Tensor pooled = reshape(scale(col_sums(logits, tape), 1.0 / logits.rows(), tape),
                            {1, logits.cols()}, tape);
    Tensor h = tanh(add_row_broadcast(matmul(pooled, head.w1, tape), head.b1, tape), tape);
    Tensor o = sigmoid(add_row_broadcast(matmul(h, head.w2, tape), head.b2, tape), tape);
    Tensor pair = reshape(o, {2}, tape);

    Thresholds th;
    th.a = reduce_max(pair, tape);
    Tensor b0 = reduce_min(pair, tape);
    Tensor capped = min2(b0, add_const(th.a, -kThresholdGap, tape), tape);
    th.b = max2(capped, Tensor::scalar(0.0), tape);
    return th;
}

namespace detail {
inline void check_score(double s) {
    if (!(s >= 0.0 && s <= 1.0))
        throw contract_error("weight curve: score " + std::to_string(s) + " outside [0,1]");
}
}  // namespace detail

// Hard three-branch curve: suppress ambiguous tokens, promote key tokens,
// leave transitional ones alone.
inline double piecewise_weight(double s, double a, double b) {
    detail::check_score(s);
    if (s > a) return (1.0 - s) * (1.0 - s);
    if (s < b) return 1.0 + s;
    return 1.0;
}

inline double piecewise_weight(double s, const Thresholds& th) {
    return piecewise_weight(s, th.a_value(), th.b_value());
}

// Differentiable approximation: sigmoid gates of sharpness alpha blend the
// three branches.
inline double smooth_weight(double s, double a, double b, double alpha = kDefaultAlpha) {
    detail::check_score(s);
    if (!(alpha > 0.0)) throw contract_error("smooth_weight: alpha must be positive");
    const double g_hi = sigmoid_value(alpha * (s - a));
    const double g_lo = sigmoid_value(alpha * (b - s));
    return (1.0 - s) * (1.0 - s) * g_hi + (1.0 + s) * g_lo + (1.0 - g_hi - g_lo);
}

inline double smooth_weight(double s, const Thresholds& th, double alpha = kDefaultAlpha) {
    return smooth_weight(s, th.a_value(), th.b_value(), alpha);
}

// Tensor form of the smooth curve; differentiable in scores and thresholds.
inline Tensor smooth_weight_t(const Tensor& scores, const Thresholds& th,
                              double alpha = kDefaultAlpha, Tape* tape = nullptr) {
    for (std::size_t i = 0; i < scores.numel(); ++i) detail::check_score(scores.at(i));
    if (!(alpha > 0.0)) throw contract_error("smooth_weight: alpha must be positive");
    Tensor g_hi = sigmoid(scale(sub_scalar(scores, th.a, tape), alpha, tape), tape);
    Tensor g_lo = sigmoid(scale(sub_scalar(scores, th.b, tape), -alpha, tape), tape);
    Tensor amb = mul(square(add_const(neg(scores, tape), 1.0, tape), tape), g_hi, tape);
    Tensor key = mul(add_const(scores, 1.0, tape), g_lo, tape);
    Tensor mid = add_const(neg(add(g_hi, g_lo, tape), tape), 1.0, tape);
    return add(add(amb, key, tape), mid, tape);
}

// Open curve slot: alternative piecewise definitions drop in here and feed the
// same per-token machinery (non-differentiable path).
using WeightCurve = std::function<double(double s, double a, double b)>;

inline Tensor apply_curve(const Tensor& scores, const Thresholds& th, const WeightCurve& curve) {
    Tensor w = Tensor::zeros({scores.numel()});
    const double a = th.a_value(), b = th.b_value();
    for (std::size_t i = 0; i < scores.numel(); ++i) w.at(i) = curve(scores.at(i), a, b);
    return w;
}

// Elementwise application of the selected curve to both answers. The smooth
// mode stays on the tape; the piecewise mode is detached (it is not
// differentiable and serves analysis/inspection).
inline TokenWeights token_weights(const AmbiguityScores& scores, const Thresholds& th,
                                  WeightMode mode, double alpha = kDefaultAlpha,
                                  Tape* tape = nullptr) {
    TokenWeights w;
    if (mode == WeightMode::smooth) {
        w.chosen = smooth_weight_t(scores.chosen, th, alpha, tape);
        w.rejected = smooth_weight_t(scores.rejected, th, alpha, tape);
    } else {
        w.chosen = apply_curve(scores.chosen, th,
                               [](double s, double a, double b) { return piecewise_weight(s, a, b); });
        w.rejected = apply_curve(scores.rejected, th,
                                 [](double s, double a, double b) { return piecewise_weight(s, a, b); });
    }
    return w;
}

enum class TokenCategory { ambiguous, transitional, key };

inline TokenCategory categorize(double s, const Thresholds& th) {
    if (s > th.a_value()) return TokenCategory::ambiguous;
    if (s < th.b_value()) return TokenCategory::key;
    return TokenCategory::transitional;
}

inline const char* category_name(TokenCategory c) {
    switch (c) {
        case TokenCategory::ambiguous: return "ambiguous";
        case TokenCategory::transitional: return "transitional";
        default: return "key";
    }
}

}  // namespace aao
