// Command-line front end: training, evaluation, per-token inspection, the two
// analysis probes, and synthetic-corpus generation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aao/aao.hpp"

namespace {

using namespace aao;

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// --token accepts either a single character or a numeric id.
int parse_token_arg(const std::string& s) {
    if (s.size() == 1) return static_cast<int>(static_cast<unsigned char>(s[0]));
    try {
        std::size_t idx = 0;
        const int id = std::stoi(s, &idx);
        if (idx != s.size()) throw std::invalid_argument(s);
        return id;
    } catch (const std::exception&) {
        throw parse_error("--token expects a single character or a numeric id, got '" + s + "'");
    }
}

PreferencePair encode_cli_pair(const std::string& prompt, const std::string& chosen,
                               const std::string& rejected, std::size_t context_len) {
    EncodedPair ep = encode_pair(prompt, chosen, rejected, context_len);
    return {ep.prompt, ep.chosen, ep.rejected};
}

// Thresholds and weights the training path would assign to this pair.
struct PairInspection {
    AmbiguityScores scores;
    Thresholds thresholds;
    TokenWeights weights;
};

PairInspection inspect_pair(const Checkpoint& cp, const PreferencePair& pair, WeightMode mode,
                            double alpha) {
    PairActivation act = run_pair(cp.policy, cp.reference, pair, nullptr);
    Tensor e_w = answer_embeddings(cp.policy, act.pol_chosen, pair.chosen_tokens,
                                   EmbeddingSource::input_table, nullptr);
    Tensor e_l = answer_embeddings(cp.policy, act.pol_rejected, pair.rejected_tokens,
                                   EmbeddingSource::input_table, nullptr);
    PairInspection pi;
    pi.scores = ambiguity_scores(e_w, e_l);
    Tensor pooled = concat_rows(
        gather_rows(act.pol_chosen.logits, act.pol_chosen.predictor_rows),
        gather_rows(act.pol_rejected.logits, act.pol_rejected.predictor_rows));
    pi.thresholds = adaptive_thresholds(cp.head, pooled);
    pi.weights = token_weights(pi.scores, pi.thresholds, mode, alpha);
    return pi;
}

int cmd_synth(std::size_t n, double overlap, std::uint64_t seed, const std::string& out) {
    auto corpus = synth_corpus(n, overlap, seed);
    save_jsonl(out, corpus);
    std::cout << "wrote " << corpus.size() << " pairs to " << out
              << " (measured overlap " << fmt17(measure_overlap(corpus)) << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& method, int64_t seed, const std::string& out,
              double holdout, const std::vector<std::string>& sets) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : parse_config_file(config_path);
    if (!method.empty()) cfg.method = parse_method(method);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw parse_error("--set expects key=value, got '" + kv + "'");
        apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }

    auto raw = load_raw_pairs(data_path);
    auto split = split_pairs(raw, holdout, cfg.seed);
    auto train_pairs = encode_pairs(split.train, cfg.shape.context_len);
    auto eval_pairs = encode_pairs(split.holdout, cfg.shape.context_len);

    TrainResult res = train(cfg, train_pairs, eval_pairs, out);
    std::cout << "method=" << method_name(cfg.method) << " steps=" << res.metrics.size()
              << " final_loss=" << fmt17(res.metrics.back().total) << "\n";
    if (!eval_pairs.empty()) {
        auto summary = preference_metrics(res.policy, res.reference, eval_pairs, cfg.beta);
        std::cout << "holdout pairs=" << summary.pairs << " accuracy=" << fmt17(summary.accuracy)
                  << " mean_margin=" << fmt17(summary.mean_margin) << "\n";
    }
    if (!res.squeeze.points.empty())
        std::cout << "squeeze initial=" << fmt17(res.squeeze.points.front().mean_top1)
                  << " final=" << fmt17(res.squeeze.points.back().mean_top1) << "\n";
    std::cout << "run artifacts in " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, double beta) {
    Checkpoint cp = read_checkpoint(checkpoint);
    auto pairs = load_pairs(data, cp.policy.shape.context_len);
    auto summary = preference_metrics(cp.policy, cp.reference, pairs, beta);
    nlohmann::json j;
    j["pairs"] = summary.pairs;
    j["accuracy"] = summary.accuracy;
    j["mean_margin"] = summary.mean_margin;
    j["beta"] = beta;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_inspect(const std::string& checkpoint, const std::string& prompt,
                const std::string& chosen, const std::string& rejected,
                const std::string& curve, double alpha) {
    Checkpoint cp = read_checkpoint(checkpoint);
    const WeightMode mode = curve == "piecewise" ? WeightMode::piecewise : WeightMode::smooth;
    PreferencePair pair = encode_cli_pair(prompt, chosen, rejected, cp.policy.shape.context_len);
    PairInspection pi = inspect_pair(cp, pair, mode, alpha);

    std::cout << "# thresholds a=" << fmt17(pi.thresholds.a_value())
              << " b=" << fmt17(pi.thresholds.b_value()) << " curve=" << curve << "\n";
    std::cout << "side\tindex\ttoken\traw_max_sim\tscore\tcategory\tweight\n";
    auto emit = [&](const char* side, const std::vector<int>& toks, const Tensor& raw,
                    const Tensor& score, const Tensor& weight) {
        for (std::size_t i = 0; i < toks.size(); ++i)
            std::cout << side << '\t' << i << '\t' << Tokenizer::token_name(toks[i]) << '\t'
                      << fmt17(raw.at(i)) << '\t' << fmt17(score.at(i)) << '\t'
                      << category_name(categorize(score.at(i), pi.thresholds)) << '\t'
                      << fmt17(weight.at(i)) << '\n';
    };
    emit("chosen", pair.chosen_tokens, pi.scores.raw_chosen, pi.scores.chosen,
         pi.weights.chosen);
    emit("rejected", pair.rejected_tokens, pi.scores.raw_rejected, pi.scores.rejected,
         pi.weights.rejected);
    return 0;
}

int cmd_probe_cancellation(const std::string& checkpoint, const std::string& prompt,
                           const std::string& chosen, const std::string& rejected,
                           const std::string& token_arg, bool weighted, double alpha) {
    Checkpoint cp = read_checkpoint(checkpoint);
    PreferencePair pair = encode_cli_pair(prompt, chosen, rejected, cp.policy.shape.context_len);
    const int token = parse_token_arg(token_arg);

    TokenWeights weights;
    const TokenWeights* wp = nullptr;
    if (weighted) {
        PairInspection pi = inspect_pair(cp, pair, WeightMode::smooth, alpha);
        weights = pi.weights;
        wp = &weights;
    }
    CancellationReport rep = cancellation_probe(cp.policy, pair.prompt_tokens, pair.chosen_tokens,
                                                pair.rejected_tokens, token, wp);
    nlohmann::json j;
    j["common_token_id"] = rep.common_token_id;
    j["token"] = Tokenizer::token_name(rep.common_token_id);
    j["position_in_chosen"] = rep.position_in_chosen;
    j["position_in_rejected"] = rep.position_in_rejected;
    j["grad_cosine"] = rep.grad_cosine;
    j["residual_norm"] = rep.residual_norm;
    j["norm_chosen"] = rep.norm_chosen;
    j["norm_rejected"] = rep.norm_rejected;
    j["weighted"] = weighted;
    std::cout << j.dump() << "\n";
    return 0;
}

// horizon == 0 means "use the horizon recorded in the run's config".
int cmd_probe_squeeze(const std::string& run_dir, std::size_t horizon) {
    const std::string prompts_path = run_dir + "/eval_prompts.txt";
    std::ifstream pf(prompts_path);
    if (!pf) throw parse_error("cannot open " + prompts_path);
    std::vector<std::vector<int>> prompts;
    std::string line;
    while (std::getline(pf, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::vector<int> ids;
        int id;
        while (is >> id) ids.push_back(id);
        if (!ids.empty()) prompts.push_back(std::move(ids));
    }
    if (prompts.empty()) throw parse_error(prompts_path + ": no prompts");

    std::string method = "unknown";
    {
        std::ifstream cf(run_dir + "/config.txt");
        while (cf && std::getline(cf, line)) {
            if (line.rfind("method=", 0) == 0) method = line.substr(7);
            if (horizon == 0 && line.rfind("squeeze_horizon=", 0) == 0)
                horizon = static_cast<std::size_t>(std::stoull(line.substr(16)));
        }
    }
    if (horizon == 0) horizon = kSqueezeHorizon;

    // Checkpoints in training order: init, then each epoch.
    std::vector<std::string> ckpts;
    if (std::filesystem::exists(run_dir + "/checkpoint_init.aaoc"))
        ckpts.push_back(run_dir + "/checkpoint_init.aaoc");
    for (std::size_t e = 1;; ++e) {
        const std::string p = run_dir + "/checkpoint_epoch" + std::to_string(e) + ".aaoc";
        if (!std::filesystem::exists(p)) break;
        ckpts.push_back(p);
    }
    if (ckpts.empty()) throw parse_error(run_dir + ": no checkpoints found");

    SqueezeTrace trace;
    trace.method = method;
    std::cout << "step,mean_top1,method\n";
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        Checkpoint cp = read_checkpoint(ckpts[i]);
        const double m = squeeze_probe(cp.policy, prompts, i, trace, horizon);
        std::cout << i << ',' << fmt17(m) << ',' << method << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale laboratory for token-weighted preference optimization"};
    app.require_subcommand(1);

    // train
    std::string tr_config, tr_data, tr_method, tr_out = "run";
    std::int64_t tr_seed = -1;
    double tr_holdout = 0.1;
    std::vector<std::string> tr_sets;
    auto* train_cmd = app.add_subcommand("train", "Train a policy against a frozen reference");
    train_cmd->add_option("--config", tr_config, "key=value config file");
    train_cmd->add_option("--data", tr_data, "JSONL preference pairs")->required();
    train_cmd->add_option("--method", tr_method, "dpo | aao | dpo-random");
    train_cmd->add_option("--seed", tr_seed, "RNG seed (overrides config)");
    train_cmd->add_option("--out", tr_out, "output directory");
    train_cmd->add_option("--holdout", tr_holdout, "holdout fraction (default 0.1)");
    train_cmd->add_option("--set", tr_sets, "extra key=value config overrides")
        ->take_all();

    // eval
    std::string ev_ckpt, ev_data;
    double ev_beta = 0.1;
    auto* eval_cmd = app.add_subcommand("eval", "Margins and preference accuracy on a dataset");
    eval_cmd->add_option("--checkpoint", ev_ckpt)->required();
    eval_cmd->add_option("--data", ev_data)->required();
    eval_cmd->add_option("--beta", ev_beta, "margin scale (default 0.1)");

    // inspect
    std::string in_ckpt, in_prompt, in_chosen, in_rejected, in_curve = "smooth";
    double in_alpha = kDefaultAlpha;
    auto* inspect_cmd =
        app.add_subcommand("inspect", "Per-token similarity/weight table for one pair (TSV)");
    inspect_cmd->add_option("--checkpoint", in_ckpt)->required();
    inspect_cmd->add_option("--prompt", in_prompt)->required();
    inspect_cmd->add_option("--chosen", in_chosen)->required();
    inspect_cmd->add_option("--rejected", in_rejected)->required();
    inspect_cmd->add_option("--curve", in_curve, "smooth | piecewise")
        ->check(CLI::IsMember({"smooth", "piecewise"}));
    inspect_cmd->add_option("--alpha", in_alpha, "smooth-curve sharpness");

    // probe-cancellation
    std::string pc_ckpt, pc_prompt, pc_chosen, pc_rejected, pc_token;
    bool pc_weighted = false;
    double pc_alpha = kDefaultAlpha;
    auto* pc_cmd = app.add_subcommand("probe-cancellation",
                                      "Common-token gradient alignment report (JSON line)");
    pc_cmd->add_option("--checkpoint", pc_ckpt)->required();
    pc_cmd->add_option("--prompt", pc_prompt)->required();
    pc_cmd->add_option("--chosen", pc_chosen)->required();
    pc_cmd->add_option("--rejected", pc_rejected)->required();
    pc_cmd->add_option("--token", pc_token, "common token (char or id)")->required();
    pc_cmd->add_flag("--weighted", pc_weighted, "apply the trained weighting first");
    pc_cmd->add_option("--alpha", pc_alpha, "smooth-curve sharpness");

    // probe-squeeze
    std::string ps_run;
    std::size_t ps_horizon = 0;
    auto* ps_cmd = app.add_subcommand(
        "probe-squeeze", "Recompute the confidence trace from a run's checkpoints (CSV)");
    ps_cmd->add_option("--run-dir", ps_run)->required();
    ps_cmd->add_option("--horizon", ps_horizon,
                       "greedy-decode length per prompt (default: the run's configured value)");

    // synth
    std::size_t sy_n = 1000;
    double sy_overlap = 0.7;
    std::uint64_t sy_seed = 1;
    std::string sy_out;
    auto* sy_cmd = app.add_subcommand("synth", "Generate an overlap-controlled corpus (JSONL)");
    sy_cmd->add_option("--n", sy_n, "number of pairs");
    sy_cmd->add_option("--overlap", sy_overlap, "target token overlap in [0,1]");
    sy_cmd->add_option("--seed", sy_seed);
    sy_cmd->add_option("--out", sy_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd)
            return cmd_train(tr_config, tr_data, tr_method, tr_seed, tr_out, tr_holdout, tr_sets);
        if (*eval_cmd) return cmd_eval(ev_ckpt, ev_data, ev_beta);
        if (*inspect_cmd)
            return cmd_inspect(in_ckpt, in_prompt, in_chosen, in_rejected, in_curve, in_alpha);
        if (*pc_cmd)
            return cmd_probe_cancellation(pc_ckpt, pc_prompt, pc_chosen, pc_rejected, pc_token,
                                          pc_weighted, pc_alpha);
        if (*ps_cmd) return cmd_probe_squeeze(ps_run, ps_horizon);
        if (*sy_cmd) return cmd_synth(sy_n, sy_overlap, sy_seed, sy_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
