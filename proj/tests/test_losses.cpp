// Preference objectives: the unweighted pairwise loss, its token-weighted
// generalization, both auxiliary terms, the combined objective, and the
// random-weight baseline.

#include <gtest/gtest.h>

#include <cmath>

#include "aao/grad_check.hpp"
#include "aao/losses.hpp"
#include "test_util.hpp"

using namespace aao;
using test::random_tensor;

namespace {

ModelShape tiny_shape(std::size_t blocks = 0, std::size_t vocab = 12, std::size_t dim = 6) {
    ModelShape s;
    s.vocab_size = vocab;
    s.embed_dim = dim;
    s.context_len = 24;
    s.num_blocks = blocks;
    return s;
}

PreferencePair tiny_pair() {
    PreferencePair p;
    p.prompt_tokens = {0, 1};
    p.chosen_tokens = {2, 3, 4};
    p.rejected_tokens = {5, 6};
    return p;
}

TinyCausalLM zeroed(const ModelShape& shape) {
    TinyCausalLM m = TinyCausalLM::init(shape, 1);
    for (Tensor& p : m.params())
        for (std::size_t i = 0; i < p.numel(); ++i) p.at(i) = 0.0;
    return m;
}

TokenWeights unit_weights(const PreferencePair& p) {
    TokenWeights w;
    w.chosen = Tensor::full({p.chosen_tokens.size()}, 1.0);
    w.rejected = Tensor::full({p.rejected_tokens.size()}, 1.0);
    return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// pairwise preference loss
// ---------------------------------------------------------------------------

TEST(PairwiseLoss, PolicyEqualReferenceGivesLnTwo) {
    for (std::uint64_t seed : {1ull, 7ull, 42ull}) {
        TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), seed);
        TinyCausalLM ref = make_reference(policy);
        LossBreakdown lb = dpo_loss(policy, ref, tiny_pair(), 0.1);
        EXPECT_EQ(lb.margin, 0.0);
        EXPECT_NEAR(lb.total.item(), std::log(2.0), 1e-12);
        EXPECT_NEAR(lb.preference, std::log(2.0), 1e-12);
    }
}

TEST(PairwiseLoss, NegLogSigmoidOfMargin) {
    // Log-ratios +1 (chosen) and -1 (rejected) at beta 0.1 pin the margin at
    // 0.2; the loss is then -ln sigmoid(0.2).
    const double margin = 0.1 * ((+1.0) - (-1.0));
    Tensor loss = neg(log_sigmoid(Tensor::scalar(margin)));
    EXPECT_NEAR(loss.item(), 0.5981388693, 1e-9);
    EXPECT_NEAR(loss.item(), std::log1p(std::exp(-margin)), 1e-15);
}

TEST(PairwiseLoss, VanishesAsMarginGrows) {
    double prev = std::log(2.0);
    for (double m : {1.0, 5.0, 20.0, 80.0}) {
        const double loss = -log_sigmoid_value(m);
        EXPECT_LT(loss, prev);
        EXPECT_GT(loss, 0.0);
        prev = loss;
    }
    EXPECT_LT(-log_sigmoid_value(100.0), 1e-40);
}

TEST(PairwiseLoss, PreferenceTermIsNonNegative) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), seed);
        TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), seed + 100);
        LossBreakdown lb = dpo_loss(policy, ref, tiny_pair(), 0.1);
        EXPECT_GT(lb.preference, 0.0);
    }
}

TEST(PairwiseLoss, BetaContract) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0), 1);
    TinyCausalLM ref = make_reference(policy);
    EXPECT_THROW(dpo_loss(policy, ref, tiny_pair(), 0.0), contract_error);
    EXPECT_THROW(dpo_loss(policy, ref, tiny_pair(), -1.0), contract_error);
}

TEST(PairwiseLoss, ReferenceCarriesNoGradient) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0), 3);
    TinyCausalLM ref = make_reference(policy);
    // Nudge the policy so the margin is nonzero.
    policy.table.at(2, 0) += 0.3;

    policy.table.zero_grad();
    Tape tape;
    LossBreakdown lb = dpo_loss(policy, ref, tiny_pair(), 0.1, &tape);
    tape.backward(lb.total);

    double policy_grad_norm = 0.0;
    for (double g : policy.table.grad()) policy_grad_norm += g * g;
    EXPECT_GT(policy_grad_norm, 0.0);
    EXPECT_FALSE(ref.table.requires_grad());
}

// ---------------------------------------------------------------------------
// token-weighted loss
// ---------------------------------------------------------------------------

TEST(WeightedLoss, UnitWeightsReduceToUnweightedBitwise) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), seed);
        TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), seed + 50);
        PreferencePair pair = tiny_pair();
        LossBreakdown base = dpo_loss(policy, ref, pair, 0.1);
        LossBreakdown weighted = aao_loss(policy, ref, pair, unit_weights(pair), 0.1);
        EXPECT_EQ(base.total.item(), weighted.total.item());
        EXPECT_EQ(base.margin, weighted.margin);
    }
}

TEST(WeightedLoss, ZeroWeightsGiveLnTwo) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), 2);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), 9);
    PreferencePair pair = tiny_pair();
    TokenWeights w;
    w.chosen = Tensor::zeros({pair.chosen_tokens.size()});
    w.rejected = Tensor::zeros({pair.rejected_tokens.size()});
    LossBreakdown lb = aao_loss(policy, ref, pair, w, 0.1);
    EXPECT_EQ(lb.margin, 0.0);
    EXPECT_NEAR(lb.total.item(), std::log(2.0), 1e-12);
}

TEST(WeightedLoss, HandRecomputedMarginOnTwoTokenResponse) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0), 5);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(0), 6);
    PreferencePair pair;
    pair.prompt_tokens = {0, 1};
    pair.chosen_tokens = {2, 3};
    pair.rejected_tokens = {4, 5};
    const double beta = 0.1;

    Tensor pol_w = per_token_log_probs(policy, pair.prompt_tokens, pair.chosen_tokens);
    Tensor pol_l = per_token_log_probs(policy, pair.prompt_tokens, pair.rejected_tokens);
    Tensor ref_w = per_token_log_probs(ref, pair.prompt_tokens, pair.chosen_tokens);
    Tensor ref_l = per_token_log_probs(ref, pair.prompt_tokens, pair.rejected_tokens);

    TokenWeights w;
    w.chosen = Tensor::from({2}, {0.7, 1.3});
    w.rejected = Tensor::from({2}, {1.1, 0.4});

    auto weighted_sum = [](const Tensor& lp, const Tensor& weights) {
        double acc = 0.0;
        for (std::size_t i = 0; i < lp.numel(); ++i) acc += weights.at(i) * lp.at(i);
        return acc;
    };
    const double hand_margin = beta * ((weighted_sum(pol_w, w.chosen) - weighted_sum(ref_w, w.chosen)) -
                                       (weighted_sum(pol_l, w.rejected) - weighted_sum(ref_l, w.rejected)));
    LossBreakdown lb = aao_loss(policy, ref, pair, w, beta);
    EXPECT_NEAR(lb.margin, hand_margin, 1e-12);
    EXPECT_NEAR(lb.total.item(), std::log1p(std::exp(-hand_margin)), 1e-12);

    // Zeroing one chosen weight removes exactly that token's contribution.
    TokenWeights w2;
    w2.chosen = Tensor::from({2}, {0.7, 0.0});
    w2.rejected = w.rejected;
    LossBreakdown lb2 = aao_loss(policy, ref, pair, w2, beta);
    const double removed = beta * 1.3 * (pol_w.at(1) - ref_w.at(1));
    EXPECT_NEAR(lb.margin - lb2.margin, removed, 1e-12);
}

TEST(WeightedLoss, LengthMismatchThrows) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0), 1);
    TinyCausalLM ref = make_reference(policy);
    PreferencePair pair = tiny_pair();
    TokenWeights w;
    w.chosen = Tensor::full({pair.chosen_tokens.size() + 1}, 1.0);
    w.rejected = Tensor::full({pair.rejected_tokens.size()}, 1.0);
    EXPECT_THROW(aao_loss(policy, ref, pair, w, 0.1), contract_error);
}

TEST(WeightedLoss, RawLogitApplicationAlsoReducesAtUnitWeights) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), 4);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), 14);
    PreferencePair pair = tiny_pair();
    LossConfig cfg;
    cfg.weight_application = WeightApplication::raw_logits;

    LossBreakdown base = dpo_loss(policy, ref, pair, 0.1);
    LossBreakdown raw = aao_loss(policy, ref, pair, unit_weights(pair), 0.1, nullptr, cfg);
    EXPECT_EQ(base.total.item(), raw.total.item());

    // With non-unit weights the two application points genuinely differ.
    TokenWeights w = unit_weights(pair);
    w.chosen.at(0) = 0.5;
    LossBreakdown lp_app = aao_loss(policy, ref, pair, w, 0.1);
    LossBreakdown rl_app = aao_loss(policy, ref, pair, w, 0.1, nullptr, cfg);
    EXPECT_NE(lp_app.total.item(), rl_app.total.item());
}

TEST(WeightedLoss, UnweightedReferenceOptOut) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), 8);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), 18);
    PreferencePair pair = tiny_pair();
    TokenWeights w = unit_weights(pair);
    w.chosen.at(1) = 0.25;

    LossConfig no_ref_weights;
    no_ref_weights.weight_reference = false;
    LossBreakdown both = aao_loss(policy, ref, pair, w, 0.1);
    LossBreakdown policy_only = aao_loss(policy, ref, pair, w, 0.1, nullptr, no_ref_weights);
    EXPECT_NE(both.margin, policy_only.margin);

    // At unit weights the toggle is invisible.
    LossBreakdown a = aao_loss(policy, ref, pair, unit_weights(pair), 0.1);
    LossBreakdown b = aao_loss(policy, ref, pair, unit_weights(pair), 0.1, nullptr, no_ref_weights);
    EXPECT_EQ(a.total.item(), b.total.item());
}

// ---------------------------------------------------------------------------
// contrastive suppression
// ---------------------------------------------------------------------------

TEST(Contrastive, OrthogonalSidesGiveZero) {
    Tensor e_w = Tensor::from({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
    Tensor e_l = Tensor::from({2, 4}, {0, 0, 1, 0, 0, 0, 0, 1});
    Tensor ones2 = Tensor::full({2}, 1.0);
    EXPECT_EQ(contrastive_suppression_loss(e_w, ones2, e_l, ones2).item(), 0.0);
}

TEST(Contrastive, IdenticalSingleTokensGiveTwo) {
    Tensor e = Tensor::from({1, 3}, {0.2, -0.5, 0.9});
    Tensor one = Tensor::full({1}, 1.0);
    EXPECT_NEAR(contrastive_suppression_loss(e, one, e, one).item(), 2.0, 1e-12);
}

TEST(Contrastive, HandComputedPairMean) {
    // Rows ([1,0],[0,1]) vs ([1,0],[1,1]/sqrt(2)): pairwise cosines are
    // 1, 1/sqrt(2), 0, 1/sqrt(2); the directional mean is their average.
    const double r = 1.0 / std::sqrt(2.0);
    Tensor e_w = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor e_l = Tensor::from({2, 2}, {1, 0, r, r});
    Tensor ones2 = Tensor::full({2}, 1.0);
    const double loss = contrastive_suppression_loss(e_w, ones2, e_l, ones2).item();
    EXPECT_NEAR(loss, 1.2071067812, 1e-10);
    EXPECT_NEAR(loss, 2.0 * (1.0 + r + 0.0 + r) / 4.0, 1e-12);
}

TEST(Contrastive, EqualsTwiceTheDirectionalMean) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Tensor e_w = random_tensor({3, 5}, seed * 3, -1.0, 1.0);
        Tensor e_l = random_tensor({4, 5}, seed * 3 + 1, -1.0, 1.0);
        Tensor w_w = random_tensor({3}, seed * 3 + 2, 0.2, 2.0);
        Tensor w_l = random_tensor({4}, seed * 3 + 3, 0.2, 2.0);
        const double loss = contrastive_suppression_loss(e_w, w_w, e_l, w_l).item();

        double mean = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                Tensor ri = Tensor::zeros({5});
                Tensor rj = Tensor::zeros({5});
                for (std::size_t c = 0; c < 5; ++c) {
                    ri.at(c) = w_w.at(i) * e_w.at(i, c);
                    rj.at(c) = w_l.at(j) * e_l.at(j, c);
                }
                mean += cosine_value(ri, rj);
            }
        mean /= 12.0;
        EXPECT_NEAR(loss, 2.0 * mean, 1e-12);
        EXPECT_GE(loss, -2.0);
        EXPECT_LE(loss, 2.0);
    }
}

TEST(Contrastive, ZeroWeightedRowsAreSkipped) {
    // With the second chosen row weighted 0, the mean runs over the single
    // surviving row against both rejected rows.
    Tensor e_w = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor e_l = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor w_w = Tensor::from({2}, {1.0, 0.0});
    Tensor ones2 = Tensor::full({2}, 1.0);
    const double loss = contrastive_suppression_loss(e_w, w_w, e_l, ones2).item();
    EXPECT_NEAR(loss, 2.0 * (1.0 + 0.0) / 2.0, 1e-12);
}

TEST(Contrastive, AllZeroSideIsDegenerate) {
    Tensor e = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor ones2 = Tensor::full({2}, 1.0);
    Tensor zeros2 = Tensor::zeros({2});
    EXPECT_THROW(contrastive_suppression_loss(e, zeros2, e, ones2), degenerate_input_error);
    EXPECT_THROW(contrastive_suppression_loss(e, ones2, e, zeros2), degenerate_input_error);
}

TEST(Contrastive, ShapeAndLengthContracts) {
    Tensor e_w = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
    Tensor e_l = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor ones2 = Tensor::full({2}, 1.0);
    EXPECT_THROW(contrastive_suppression_loss(e_w, ones2, e_l, ones2), shape_error);
    EXPECT_THROW(
        contrastive_suppression_loss(e_w, Tensor::full({3}, 1.0), e_w, ones2), contract_error);
}

TEST(Contrastive, GradientMatchesFiniteDifferences) {
    Tensor e_w = random_tensor({3, 4}, 31, 0.3, 1.2, true);
    Tensor e_l = random_tensor({2, 4}, 32, 0.3, 1.2);
    Tensor w_w = random_tensor({3}, 33, 0.5, 1.5, true);
    Tensor w_l = random_tensor({2}, 34, 0.5, 1.5);
    auto f = [&](Tape* tape) {
        return contrastive_suppression_loss(e_w, w_w, e_l, w_l, tape);
    };
    EXPECT_LT(check_gradient(f, e_w).max_rel_err, 1e-4);
}

TEST(Contrastive, InvariantToPositiveWeightRescaling) {
    // Cosine ignores positive per-row scaling, so the loss cannot depend on
    // the magnitude of a nonzero weight: doubling is bitwise invisible, any
    // positive rescale agrees to rounding, and the analytic weight gradient
    // vanishes.
    Tensor e_w = random_tensor({3, 4}, 31, 0.3, 1.2);
    Tensor e_l = random_tensor({2, 4}, 32, 0.3, 1.2);
    Tensor w_w = random_tensor({3}, 33, 0.5, 1.5, true);
    Tensor w_l = random_tensor({2}, 34, 0.5, 1.5);
    const double base = contrastive_suppression_loss(e_w, w_w, e_l, w_l).item();

    Tensor doubled = Tensor::zeros({3});
    Tensor stretched = Tensor::zeros({3});
    for (std::size_t i = 0; i < 3; ++i) {
        doubled.at(i) = 2.0 * w_w.at(i);
        stretched.at(i) = 1.7 * w_w.at(i);
    }
    EXPECT_EQ(contrastive_suppression_loss(e_w, doubled, e_l, w_l).item(), base);
    EXPECT_NEAR(contrastive_suppression_loss(e_w, stretched, e_l, w_l).item(), base, 1e-12);

    w_w.zero_grad();
    Tape tape;
    Tensor loss = contrastive_suppression_loss(e_w, w_w, e_l, w_l, &tape);
    tape.backward(loss);
    for (double g : w_w.grad()) EXPECT_LT(std::fabs(g), 1e-12);
}

// ---------------------------------------------------------------------------
// reward enhancement
// ---------------------------------------------------------------------------

TEST(Reward, UniformModelHandValues) {
    TinyCausalLM m = zeroed(tiny_shape(0, 4, 8));
    PreferencePair pair;
    pair.prompt_tokens = {0};
    pair.chosen_tokens = {1, 2, 3};
    pair.rejected_tokens = {2};

    TokenWeights ones = unit_weights(pair);
    EXPECT_NEAR(reward_enhancement_loss(m, pair, ones).item(), 3.0 * std::log(4.0), 1e-12);
    EXPECT_NEAR(reward_enhancement_loss(m, pair, ones).item(), 4.1588830834, 1e-9);

    TokenWeights zeros;
    zeros.chosen = Tensor::zeros({3});
    zeros.rejected = Tensor::zeros({1});
    EXPECT_EQ(reward_enhancement_loss(m, pair, zeros).item(), 0.0);

    TokenWeights gapped;
    gapped.chosen = Tensor::from({3}, {1.0, 0.0, 1.0});
    gapped.rejected = Tensor::full({1}, 1.0);
    EXPECT_NEAR(reward_enhancement_loss(m, pair, gapped).item(), 2.0 * std::log(4.0), 1e-12);
}

TEST(Reward, NonNegativeForNonNegativeWeights) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TinyCausalLM m = TinyCausalLM::init(tiny_shape(1), seed);
        PreferencePair pair = tiny_pair();
        TokenWeights w;
        w.chosen = random_tensor({pair.chosen_tokens.size()}, seed + 10, 0.0, 2.0);
        w.rejected = random_tensor({pair.rejected_tokens.size()}, seed + 20, 0.0, 2.0);
        EXPECT_GE(reward_enhancement_loss(m, pair, w).item(), 0.0);
    }
}

TEST(Reward, DecreasesWhenChosenTokenGetsLikelier) {
    // Zero-block model with a one-hot first embedding row: raising the head
    // entry that feeds the chosen token's logit raises its probability.
    TinyCausalLM m = zeroed(tiny_shape(0, 6, 4));
    m.table.at(0, 0) = 1.0;
    PreferencePair pair;
    pair.prompt_tokens = {0};
    pair.chosen_tokens = {2};
    pair.rejected_tokens = {3};
    TokenWeights w = unit_weights(pair);

    const double before = reward_enhancement_loss(m, pair, w).item();
    m.head.at(0, 2) = 1.0;
    const double after = reward_enhancement_loss(m, pair, w).item();
    EXPECT_LT(after, before);
}

TEST(Reward, GradientMatchesFiniteDifferences) {
    TinyCausalLM m = TinyCausalLM::init(tiny_shape(0), 44);
    PreferencePair pair = tiny_pair();
    TokenWeights w;
    w.chosen = random_tensor({pair.chosen_tokens.size()}, 45, 0.2, 1.8);
    w.rejected = random_tensor({pair.rejected_tokens.size()}, 46, 0.2, 1.8);
    auto f = [&](Tape* tape) { return reward_enhancement_loss(m, pair, w, tape); };
    EXPECT_LT(check_gradient(f, m.table).max_rel_err, 1e-4);
    EXPECT_LT(check_gradient(f, m.head).max_rel_err, 1e-4);
}

// ---------------------------------------------------------------------------
// combined objective
// ---------------------------------------------------------------------------

namespace {

// The training-path wiring: activations, embeddings, scores, thresholds from
// pooled predictor logits, then the combined objective.
LossBreakdown combined_loss(const TinyCausalLM& policy, const TinyCausalLM& ref,
                            const ThresholdHead& head, const PreferencePair& pair,
                            const LossConfig& cfg, Tape* tape) {
    PairActivation act = run_pair(policy, ref, pair, tape);
    Tensor e_w =
        answer_embeddings(policy, act.pol_chosen, pair.chosen_tokens, cfg.embedding_source, tape);
    Tensor e_l = answer_embeddings(policy, act.pol_rejected, pair.rejected_tokens,
                                   cfg.embedding_source, tape);
    AmbiguityScores scores = ambiguity_scores(e_w, e_l, tape);
    Tensor pooled =
        concat_rows(gather_rows(act.pol_chosen.logits, act.pol_chosen.predictor_rows, tape),
                    gather_rows(act.pol_rejected.logits, act.pol_rejected.predictor_rows, tape),
                    tape);
    Thresholds th = adaptive_thresholds(head, pooled, tape);
    return total_loss_from(act, e_w, e_l, scores, th, cfg, tape);
}

}  // namespace

TEST(TotalLoss, ZeroCoefficientLeavesPreferenceTerm) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0), 3);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(0), 13);
    ThresholdHead head = ThresholdHead::init(policy.shape.vocab_size, 4, 7);
    LossConfig cfg;
    cfg.lambda_aux = 0.0;
    LossBreakdown lb = combined_loss(policy, ref, head, tiny_pair(), cfg, nullptr);
    EXPECT_EQ(lb.total.item(), lb.preference);
}

TEST(TotalLoss, BreakdownIdentity) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), seed);
        TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), seed + 31);
        ThresholdHead head = ThresholdHead::init(policy.shape.vocab_size, 4, seed);
        LossConfig cfg;
        cfg.lambda_aux = 0.7;
        LossBreakdown lb = combined_loss(policy, ref, head, tiny_pair(), cfg, nullptr);
        EXPECT_NEAR(lb.total.item(),
                    lb.preference + cfg.lambda_aux * (lb.contrastive + lb.reward), 1e-12);
        EXPECT_GT(lb.preference, 0.0);
    }
}

TEST(TotalLoss, ArithmeticOfStatedTerms) {
    // preference 0.7, contrastive 1.2, reward 4.0 at coefficient 1 -> 5.9.
    EXPECT_DOUBLE_EQ(0.7 + 1.0 * (1.2 + 4.0), 5.9);
}

TEST(TotalLoss, GradientMatchesFiniteDifferencesOnZeroBlockModel) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(0, 10, 5), 61);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(0, 10, 5), 62);
    ThresholdHead head = ThresholdHead::init(10, 4, 63);
    // A fresh head emits two near-identical outputs around 0.5, which parks
    // the lower threshold on its clamp and, at a sharp curve, parks every
    // sigmoid deep in saturation where gradients sink under finite-difference
    // noise. Separate the outputs and soften the curve so the oracle is
    // well-conditioned.
    head.b2.at(0) = 0.8;
    head.b2.at(1) = -0.4;
    PreferencePair pair;
    pair.prompt_tokens = {0, 1};
    pair.chosen_tokens = {2, 3, 6};
    pair.rejected_tokens = {4, 5, 7};
    LossConfig cfg;
    cfg.alpha = 4.0;

    auto f = [&](Tape* tape) {
        return combined_loss(policy, ref, head, pair, cfg, tape).total;
    };
    EXPECT_LT(check_gradient(f, policy.table).max_rel_err, 1e-4);
    EXPECT_LT(check_gradient(f, policy.head).max_rel_err, 1e-4);
    EXPECT_LT(check_gradient(f, head.b2).max_rel_err, 1e-4);

    // w1 reaches the loss only through near-flat pooled-logit projections, so
    // some coordinates carry gradients around 1e-7 where central differences
    // bottom out at ~1e-11 of absolute noise; accept agreement to that noise
    // or to the relative tolerance, per coordinate.
    head.w1.zero_grad();
    Tape tape;
    Tensor loss = f(&tape);
    tape.backward(loss);
    const std::vector<double> analytic = head.w1.grad();
    const double eps = 1e-5;
    for (std::size_t i = 0; i < head.w1.numel(); ++i) {
        const double keep = head.w1.at(i);
        head.w1.at(i) = keep + eps;
        const double up = f(nullptr).item();
        head.w1.at(i) = keep - eps;
        const double down = f(nullptr).item();
        head.w1.at(i) = keep;
        const double numeric = (up - down) / (2.0 * eps);
        const bool within_noise = std::fabs(analytic[i] - numeric) < 1e-9;
        EXPECT_TRUE(within_noise || grad_rel_err(analytic[i], numeric) < 1e-4)
            << "w1[" << i << "] analytic " << analytic[i] << " numeric " << numeric;
    }
}

TEST(TotalLoss, FinalHiddenEmbeddingSourceRuns) {
    TinyCausalLM policy = TinyCausalLM::init(tiny_shape(1), 71);
    TinyCausalLM ref = TinyCausalLM::init(tiny_shape(1), 72);
    ThresholdHead head = ThresholdHead::init(policy.shape.vocab_size, 4, 73);
    LossConfig cfg;
    cfg.embedding_source = EmbeddingSource::final_hidden;
    LossBreakdown lb = combined_loss(policy, ref, head, tiny_pair(), cfg, nullptr);
    EXPECT_TRUE(std::isfinite(lb.total.item()));

    LossConfig table_cfg;
    LossBreakdown table_lb = combined_loss(policy, ref, head, tiny_pair(), table_cfg, nullptr);
    EXPECT_NE(lb.contrastive, table_lb.contrastive);
}

// ---------------------------------------------------------------------------
// random-weight baseline
// ---------------------------------------------------------------------------

TEST(RandomWeights, DeterministicPerPairAndSeed) {
    PreferencePair pair = tiny_pair();
    TokenWeights a = random_weights(pair, 9);
    TokenWeights b = random_weights(pair, 9);
    ASSERT_EQ(a.chosen.numel(), pair.chosen_tokens.size());
    for (std::size_t i = 0; i < a.chosen.numel(); ++i)
        EXPECT_EQ(a.chosen.at(i), b.chosen.at(i));
    for (std::size_t i = 0; i < a.rejected.numel(); ++i)
        EXPECT_EQ(a.rejected.at(i), b.rejected.at(i));

    TokenWeights c = random_weights(pair, 10);
    bool differs = false;
    for (std::size_t i = 0; i < a.chosen.numel(); ++i)
        differs |= a.chosen.at(i) != c.chosen.at(i);
    EXPECT_TRUE(differs);

    PreferencePair other = pair;
    other.chosen_tokens.back() = 7;
    TokenWeights d = random_weights(other, 9);
    bool pair_sensitive = false;
    for (std::size_t i = 0; i < a.chosen.numel(); ++i)
        pair_sensitive |= a.chosen.at(i) != d.chosen.at(i);
    EXPECT_TRUE(pair_sensitive);
}

TEST(RandomWeights, SupportAndMean) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        PreferencePair pair;
        pair.prompt_tokens = {0};
        pair.chosen_tokens = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        pair.rejected_tokens = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
        TokenWeights w = random_weights(pair, seed);
        for (const Tensor& side : {w.chosen, w.rejected})
            for (std::size_t i = 0; i < side.numel(); ++i) {
                EXPECT_GE(side.at(i), 0.0);
                EXPECT_LT(side.at(i), 2.0);
                total += side.at(i);
                ++count;
            }
    }
    ASSERT_EQ(count, 10000u);
    EXPECT_NEAR(total / static_cast<double>(count), 1.0, 0.02);
}
