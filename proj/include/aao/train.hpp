#pragma once

// Training harness: configuration (file + programmatic), the batch loop with
// per-method loss dispatch, metric/checkpoint emission, and the DPO-vs-AAO
// overhead report.
//
// Determinism contract: given (config, seed, dataset), every byte of
// metrics.csv and of the checkpoints is reproducible. Wall-clock timings are
// therefore kept out of metrics.csv and land in timing.csv instead.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "aao/ambiguity.hpp"
#include "aao/analysis.hpp"
#include "aao/checkpoint.hpp"
#include "aao/errors.hpp"
#include "aao/losses.hpp"
#include "aao/model.hpp"
#include "aao/optim.hpp"
#include "aao/tensor.hpp"

namespace aao {

enum class Method { dpo, aao, dpo_random };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::dpo: return "dpo";
        case Method::aao: return "aao";
        default: return "dpo-random";
    }
}

inline Method parse_method(const std::string& s) {
    if (s == "dpo") return Method::dpo;
    if (s == "aao") return Method::aao;
    if (s == "dpo-random") return Method::dpo_random;
    throw parse_error("unknown method '" + s + "' (expected dpo | aao | dpo-random)");
}

struct TrainConfig {
    Method method = Method::dpo;
    double beta = 0.1;
    double alpha = kDefaultAlpha;
    double lambda_aux = 1.0;
    // Desk-scale default; rates around 5e-7, typical when fine-tuning
    // billion-parameter models, would not move this model within one epoch.
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t epochs = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    ModelShape shape{};  // vocab 260 / dim 64 / context 256 / 2 blocks
    std::size_t head_hidden = 64;
    WeightApplication weight_application = WeightApplication::log_probs;
    EmbeddingSource embedding_source = EmbeddingSource::input_table;
    bool weight_reference = true;
    bool probe_squeeze = true;
    std::size_t squeeze_prompts = 16;
    std::size_t squeeze_horizon = kSqueezeHorizon;
    // Validation switch: the aao path runs with all-ones weights, bypassing
    // the curve; with lambda_aux = 0 this must reproduce dpo bitwise.
    bool unit_weights = false;

    LossConfig loss_config() const {
        LossConfig c;
        c.beta = beta;
        c.alpha = alpha;
        c.lambda_aux = lambda_aux;
        c.weight_application = weight_application;
        c.embedding_source = embedding_source;
        c.weight_reference = weight_reference;
        return c;
    }

    void validate() const {
        if (!(beta > 0.0)) throw contract_error("config: beta must be > 0");
        if (!(alpha > 0.0)) throw contract_error("config: alpha must be > 0");
        if (lambda_aux < 0.0) throw contract_error("config: lambda_aux must be >= 0");
        if (batch_size < 1) throw contract_error("config: batch_size must be >= 1");
        if (epochs < 1) throw contract_error("config: epochs must be >= 1");
        if (shape.vocab_size < 2) throw contract_error("config: vocab_size must be >= 2");
    }
};

inline WeightApplication parse_weight_application(const std::string& s) {
    if (s == "log-probs") return WeightApplication::log_probs;
    if (s == "raw-logits") return WeightApplication::raw_logits;
    throw parse_error("unknown weight_application '" + s + "' (log-probs | raw-logits)");
}

inline EmbeddingSource parse_embedding_source(const std::string& s) {
    if (s == "input-table") return EmbeddingSource::input_table;
    if (s == "final-hidden") return EmbeddingSource::final_hidden;
    throw parse_error("unknown embedding_source '" + s + "' (input-table | final-hidden)");
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw parse_error("config: " + key + " expects true/false, got '" + v + "'");
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t idx = 0;
        const double x = std::stod(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw parse_error("config: " + key + " expects a number, got '" + v + "'");
    }
}

inline std::uint64_t parse_uint(const std::string& v, const std::string& key) {
    try {
        std::size_t idx = 0;
        const unsigned long long x = std::stoull(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw parse_error("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
}

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace detail

// Applies one key=value setting; shared by the config file and CLI overrides.
inline void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_uint;
    if (key == "method") cfg.method = parse_method(value);
    else if (key == "beta") cfg.beta = parse_double(value, key);
    else if (key == "alpha") cfg.alpha = parse_double(value, key);
    else if (key == "lambda_aux") cfg.lambda_aux = parse_double(value, key);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(value, key);
    else if (key == "batch_size") cfg.batch_size = parse_uint(value, key);
    else if (key == "epochs") cfg.epochs = parse_uint(value, key);
    else if (key == "adam_beta1") cfg.adam_beta1 = parse_double(value, key);
    else if (key == "adam_beta2") cfg.adam_beta2 = parse_double(value, key);
    else if (key == "adam_eps") cfg.adam_eps = parse_double(value, key);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(value, key);
    else if (key == "clip_norm") cfg.clip_norm = parse_double(value, key);
    else if (key == "seed") cfg.seed = parse_uint(value, key);
    else if (key == "vocab_size") cfg.shape.vocab_size = parse_uint(value, key);
    else if (key == "embed_dim") cfg.shape.embed_dim = parse_uint(value, key);
    else if (key == "context_len") cfg.shape.context_len = parse_uint(value, key);
    else if (key == "num_blocks") cfg.shape.num_blocks = parse_uint(value, key);
    else if (key == "tie_output") cfg.shape.tie_output = parse_bool(value, key);
    else if (key == "head_hidden") cfg.head_hidden = parse_uint(value, key);
    else if (key == "weight_application") cfg.weight_application = parse_weight_application(value);
    else if (key == "embedding_source") cfg.embedding_source = parse_embedding_source(value);
    else if (key == "weight_reference") cfg.weight_reference = parse_bool(value, key);
    else if (key == "probe_squeeze") cfg.probe_squeeze = parse_bool(value, key);
    else if (key == "squeeze_prompts") cfg.squeeze_prompts = parse_uint(value, key);
    else if (key == "squeeze_horizon") cfg.squeeze_horizon = parse_uint(value, key);
    else if (key == "unit_weights") cfg.unit_weights = parse_bool(value, key);
    else throw parse_error("config: unknown key '" + key + "'");
}

// Flat key=value file; '#' starts a comment; blank lines ignored. Environment
// variables are never consulted.
inline TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open config: " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string{};
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        try {
            apply_config_kv(cfg, key, value);
        } catch (const parse_error& e) {
            throw parse_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

inline std::string config_to_string(const TrainConfig& cfg) {
    using detail::fmt17;
    std::ostringstream os;
    os << "method=" << method_name(cfg.method) << '\n'
       << "beta=" << fmt17(cfg.beta) << '\n'
       << "alpha=" << fmt17(cfg.alpha) << '\n'
       << "lambda_aux=" << fmt17(cfg.lambda_aux) << '\n'
       << "learning_rate=" << fmt17(cfg.learning_rate) << '\n'
       << "batch_size=" << cfg.batch_size << '\n'
       << "epochs=" << cfg.epochs << '\n'
       << "adam_beta1=" << fmt17(cfg.adam_beta1) << '\n'
       << "adam_beta2=" << fmt17(cfg.adam_beta2) << '\n'
       << "adam_eps=" << fmt17(cfg.adam_eps) << '\n'
       << "weight_decay=" << fmt17(cfg.weight_decay) << '\n'
       << "clip_norm=" << fmt17(cfg.clip_norm) << '\n'
       << "seed=" << cfg.seed << '\n'
       << "vocab_size=" << cfg.shape.vocab_size << '\n'
       << "embed_dim=" << cfg.shape.embed_dim << '\n'
       << "context_len=" << cfg.shape.context_len << '\n'
       << "num_blocks=" << cfg.shape.num_blocks << '\n'
       << "tie_output=" << (cfg.shape.tie_output ? "true" : "false") << '\n'
       << "head_hidden=" << cfg.head_hidden << '\n'
       << "weight_application="
       << (cfg.weight_application == WeightApplication::log_probs ? "log-probs" : "raw-logits")
       << '\n'
       << "embedding_source="
       << (cfg.embedding_source == EmbeddingSource::input_table ? "input-table" : "final-hidden")
       << '\n'
       << "weight_reference=" << (cfg.weight_reference ? "true" : "false") << '\n'
       << "probe_squeeze=" << (cfg.probe_squeeze ? "true" : "false") << '\n'
       << "squeeze_prompts=" << cfg.squeeze_prompts << '\n'
       << "squeeze_horizon=" << cfg.squeeze_horizon << '\n'
       << "unit_weights=" << (cfg.unit_weights ? "true" : "false") << '\n';
    return os.str();
}

struct MetricsRecord {
    std::size_t step = 0;
    std::string method;
    double total = 0.0, preference = 0.0, contrastive = 0.0, reward = 0.0, margin = 0.0;
    double threshold_a = 0.0, threshold_b = 0.0;  // nan for non-aao methods
    double frac_ambiguous = 0.0, frac_transitional = 0.0, frac_key = 0.0;
    double grad_norm = 0.0;
    double wall_seconds = 0.0;  // timing.csv only, to keep metrics.csv deterministic
};

inline const char* metrics_csv_header() {
    return "step,method,loss_total,loss_preference,loss_contrastive,loss_reward,margin,"
           "threshold_a,threshold_b,frac_ambiguous,frac_transitional,frac_key,grad_norm";
}

inline std::string metrics_csv_row(const MetricsRecord& r) {
    using detail::fmt17;
    std::ostringstream os;
    os << r.step << ',' << r.method << ',' << fmt17(r.total) << ',' << fmt17(r.preference) << ','
       << fmt17(r.contrastive) << ',' << fmt17(r.reward) << ',' << fmt17(r.margin) << ','
       << fmt17(r.threshold_a) << ',' << fmt17(r.threshold_b) << ',' << fmt17(r.frac_ambiguous)
       << ',' << fmt17(r.frac_transitional) << ',' << fmt17(r.frac_key) << ','
       << fmt17(r.grad_norm);
    return os.str();
}

struct TrainResult {
    TinyCausalLM policy;
    ThresholdHead head;
    TinyCausalLM reference;
    std::vector<MetricsRecord> metrics;
    SqueezeTrace squeeze;
    std::vector<std::vector<int>> eval_prompts;
    std::uint64_t reference_hash_begin = 0;
    std::uint64_t reference_hash_end = 0;
};

namespace detail {

inline std::string dump_pair(const PreferencePair& p) {
    std::ostringstream os;
    auto list = [&](const char* name, const std::vector<int>& v) {
        os << name << "=[";
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << "] ";
    };
    list("prompt", p.prompt_tokens);
    list("chosen", p.chosen_tokens);
    list("rejected", p.rejected_tokens);
    return os.str();
}

struct PairOutcome {
    LossBreakdown loss;
    double threshold_a = std::nan(""), threshold_b = std::nan("");
    double frac_amb = 0.0, frac_tra = 1.0, frac_key = 0.0;
};

inline void count_categories(const AmbiguityScores& scores, const Thresholds& th,
                             PairOutcome& out) {
    std::size_t amb = 0, tra = 0, key = 0, n = 0;
    auto tally = [&](const Tensor& s) {
        for (std::size_t i = 0; i < s.numel(); ++i, ++n) {
            switch (categorize(s.at(i), th)) {
                case TokenCategory::ambiguous: ++amb; break;
                case TokenCategory::transitional: ++tra; break;
                case TokenCategory::key: ++key; break;
            }
        }
    };
    tally(scores.chosen);
    tally(scores.rejected);
    out.frac_amb = static_cast<double>(amb) / static_cast<double>(n);
    out.frac_tra = static_cast<double>(tra) / static_cast<double>(n);
    out.frac_key = static_cast<double>(key) / static_cast<double>(n);
}

inline PairOutcome evaluate_pair(const TrainConfig& cfg, const LossConfig& lcfg,
                                 const TinyCausalLM& policy, const TinyCausalLM& reference,
                                 const ThresholdHead& head, const PreferencePair& pair,
                                 Tape* tape) {
    PairOutcome out;
    switch (cfg.method) {
        case Method::dpo:
            out.loss = dpo_loss(policy, reference, pair, cfg.beta, tape, lcfg);
            break;
        case Method::dpo_random: {
            const TokenWeights w = random_weights(pair, cfg.seed);
            out.loss = aao_loss(policy, reference, pair, w, cfg.beta, tape, lcfg);
            break;
        }
        case Method::aao: {
            PairActivation act = run_pair(policy, reference, pair, tape);
            if (cfg.unit_weights) {
                TokenWeights ones;
                ones.chosen = Tensor::full({pair.chosen_tokens.size()}, 1.0);
                ones.rejected = Tensor::full({pair.rejected_tokens.size()}, 1.0);
                LossBreakdown lb = preference_loss(act, ones.chosen, ones.rejected, lcfg, tape);
                if (lcfg.lambda_aux != 0.0) {
                    Tensor e_w = answer_embeddings(policy, act.pol_chosen, pair.chosen_tokens,
                                                   lcfg.embedding_source, tape);
                    Tensor e_l = answer_embeddings(policy, act.pol_rejected, pair.rejected_tokens,
                                                   lcfg.embedding_source, tape);
                    Tensor c = contrastive_suppression_loss(e_w, ones.chosen, e_l, ones.rejected,
                                                            tape);
                    Tensor r = reward_enhancement_loss_from(act.pol_chosen, ones.chosen, tape);
                    lb.contrastive = c.item();
                    lb.reward = r.item();
                    lb.total = add(lb.total, scale(add(c, r, tape), lcfg.lambda_aux, tape), tape);
                }
                out.loss = lb;
                break;
            }
            Tensor e_w = answer_embeddings(policy, act.pol_chosen, pair.chosen_tokens,
                                           lcfg.embedding_source, tape);
            Tensor e_l = answer_embeddings(policy, act.pol_rejected, pair.rejected_tokens,
                                           lcfg.embedding_source, tape);
            AmbiguityScores scores = ambiguity_scores(e_w, e_l, tape);
            Tensor pooled = concat_rows(
                gather_rows(act.pol_chosen.logits, act.pol_chosen.predictor_rows, tape),
                gather_rows(act.pol_rejected.logits, act.pol_rejected.predictor_rows, tape), tape);
            Thresholds th = adaptive_thresholds(head, pooled, tape);
            out.loss = total_loss_from(act, e_w, e_l, scores, th, lcfg, tape);
            out.threshold_a = th.a_value();
            out.threshold_b = th.b_value();
            count_categories(scores, th, out);
            break;
        }
    }
    if (!std::isfinite(out.loss.total.item()))
        throw numeric_error("non-finite loss " + std::to_string(out.loss.total.item()) +
                            " on pair: " + dump_pair(pair));
    return out;
}

}  // namespace detail

// Full training run. Writes metrics.csv / timing.csv / squeeze.csv /
// config.txt / eval_prompts.txt and per-epoch checkpoints into out_dir when
// one is given; always returns everything in memory.
inline TrainResult train(const TrainConfig& cfg, const std::vector<PreferencePair>& train_pairs,
                         const std::vector<PreferencePair>& eval_pairs,
                         const std::string& out_dir = "") {
    cfg.validate();
    if (train_pairs.empty()) throw contract_error("train: empty training set");
    for (const auto& p : train_pairs) validate_pair(p, cfg.shape);
    for (const auto& p : eval_pairs) validate_pair(p, cfg.shape);

    TrainResult res;
    res.policy = TinyCausalLM::init(cfg.shape, cfg.seed);
    res.reference = make_reference(res.policy);
    res.head = ThresholdHead::init(cfg.shape.vocab_size, cfg.head_hidden,
                                   cfg.seed ^ 0x7468726573686f6cull);
    res.reference_hash_begin = params_hash(res.reference);
    res.squeeze.method = method_name(cfg.method);

    const LossConfig lcfg = cfg.loss_config();

    std::vector<Tensor> trainable = res.policy.params();
    if (cfg.method == Method::aao)
        for (const auto& p : res.head.params()) trainable.push_back(p);
    AdamW opt(trainable, {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
                          cfg.weight_decay});

    const auto& prompt_source = eval_pairs.empty() ? train_pairs : eval_pairs;
    for (std::size_t i = 0; i < prompt_source.size() && res.eval_prompts.size() < cfg.squeeze_prompts;
         ++i)
        res.eval_prompts.push_back(prompt_source[i].prompt_tokens);

    const bool writing = !out_dir.empty();
    if (writing) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir + "/config.txt") << config_to_string(cfg);
        write_checkpoint(out_dir + "/checkpoint_init.aaoc", res.policy, res.head, res.reference);
        std::ofstream ep(out_dir + "/eval_prompts.txt");
        for (const auto& p : res.eval_prompts) {
            for (std::size_t i = 0; i < p.size(); ++i) ep << (i ? " " : "") << p[i];
            ep << '\n';
        }
    }

    if (cfg.probe_squeeze && !res.eval_prompts.empty())
        squeeze_probe(res.policy, res.eval_prompts, 0, res.squeeze, cfg.squeeze_horizon);

    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 shuffler(cfg.seed * 0x2545f4914f6cdd1dull + epoch);
        std::shuffle(order.begin(), order.end(), shuffler);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            opt.zero_grad();

            MetricsRecord rec;
            rec.step = ++step;
            rec.method = method_name(cfg.method);
            const bool aao = cfg.method == Method::aao && !cfg.unit_weights;
            rec.threshold_a = aao ? 0.0 : std::nan("");
            rec.threshold_b = aao ? 0.0 : std::nan("");
            rec.frac_transitional = aao ? 0.0 : 1.0;

            for (std::size_t k = start; k < stop; ++k) {
                Tape tape;
                detail::PairOutcome po = detail::evaluate_pair(cfg, lcfg, res.policy,
                                                               res.reference, res.head,
                                                               train_pairs[order[k]], &tape);
                tape.backward(po.loss.total, inv_batch);
                rec.total += po.loss.total.item() * inv_batch;
                rec.preference += po.loss.preference * inv_batch;
                rec.contrastive += po.loss.contrastive * inv_batch;
                rec.reward += po.loss.reward * inv_batch;
                rec.margin += po.loss.margin * inv_batch;
                if (aao) {
                    rec.threshold_a += po.threshold_a * inv_batch;
                    rec.threshold_b += po.threshold_b * inv_batch;
                    rec.frac_ambiguous += po.frac_amb * inv_batch;
                    rec.frac_transitional += po.frac_tra * inv_batch;
                    rec.frac_key += po.frac_key * inv_batch;
                }
            }
            rec.grad_norm = clip_global_norm(opt.params(), cfg.clip_norm);
            opt.step();
            rec.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.metrics.push_back(std::move(rec));
        }

        if (cfg.probe_squeeze && !res.eval_prompts.empty())
            squeeze_probe(res.policy, res.eval_prompts, step, res.squeeze, cfg.squeeze_horizon);
        if (writing)
            write_checkpoint(out_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".aaoc",
                             res.policy, res.head, res.reference);
    }

    res.reference_hash_end = params_hash(res.reference);
    if (res.reference_hash_end != res.reference_hash_begin)
        throw contract_error("train: reference parameters changed during the run");

    if (writing) {
        write_checkpoint(out_dir + "/checkpoint_final.aaoc", res.policy, res.head, res.reference);
        std::ofstream mf(out_dir + "/metrics.csv");
        mf << metrics_csv_header() << '\n';
        for (const auto& r : res.metrics) mf << metrics_csv_row(r) << '\n';
        std::ofstream tf(out_dir + "/timing.csv");
        tf << "step,wall_seconds\n";
        for (const auto& r : res.metrics)
            tf << r.step << ',' << detail::fmt17(r.wall_seconds) << '\n';
        std::ofstream sf(out_dir + "/squeeze.csv");
        sf << "step,mean_top1,method\n";
        for (const auto& p : res.squeeze.points)
            sf << p.step << ',' << detail::fmt17(p.mean_top1) << ',' << res.squeeze.method << '\n';
    }
    return res;
}

struct OverheadReport {
    double dpo_seconds = 0.0;
    double aao_seconds = 0.0;
    double time_ratio = 0.0;  // aao / dpo
    std::size_t head_param_count = 0;
    std::size_t head_param_bytes = 0;
};

// Times one matched epoch of DPO and of AAO over the same dataset and reports
// the wall-clock ratio plus the threshold head's size (the only parameter
// overhead AAO adds).
inline OverheadReport report_overhead(const TrainConfig& base,
                                      const std::vector<PreferencePair>& pairs) {
    if (pairs.empty()) throw contract_error("report_overhead: empty dataset");
    auto epoch = [&](Method m, const std::vector<PreferencePair>& data) {
        TrainConfig cfg = base;
        cfg.method = m;
        cfg.probe_squeeze = false;  // probe cost is method-independent; exclude it
        const auto t0 = std::chrono::steady_clock::now();
        train(cfg, data, {}, "");
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    // Untimed warm-up on a slice of the data so allocator and cache state do
    // not bias whichever method is timed first.
    const std::size_t warm = std::min<std::size_t>(pairs.size(), base.batch_size);
    const std::vector<PreferencePair> warm_slice(pairs.begin(), pairs.begin() + warm);
    epoch(Method::dpo, warm_slice);
    epoch(Method::aao, warm_slice);
    OverheadReport rep;
    rep.dpo_seconds = epoch(Method::dpo, pairs);
    rep.aao_seconds = epoch(Method::aao, pairs);
    rep.time_ratio = rep.aao_seconds / rep.dpo_seconds;
    rep.head_param_count =
        ThresholdHead::zeros(base.shape.vocab_size, base.head_hidden).param_count();
    rep.head_param_bytes = rep.head_param_count * sizeof(double);
    return rep;
}

}  // namespace aao
