#pragma once

// Preference-pair ingestion (JSON lines), the synthetic overlap-controlled
// corpus, and train/holdout splitting.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aao/errors.hpp"
#include "aao/model.hpp"
#include "aao/tokenizer.hpp"

namespace aao {

struct RawPair {
    std::string prompt, chosen, rejected;
};

// Parses {"prompt","chosen","rejected"} JSON lines. Records with an empty
// chosen or rejected string are skipped with a warning; malformed lines and an
// empty usable set are fatal.
inline std::vector<RawPair> load_raw_pairs(const std::string& path,
                                           std::ostream& warnings = std::cerr) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open dataset: " + path);
    std::vector<RawPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(path + ":" + std::to_string(lineno) + ": malformed JSON (" +
                              e.what() + ")");
        }
        if (!j.is_object() || !j.contains("prompt") || !j.contains("chosen") ||
            !j.contains("rejected") || !j["prompt"].is_string() || !j["chosen"].is_string() ||
            !j["rejected"].is_string())
            throw parse_error(path + ":" + std::to_string(lineno) +
                              ": expected string fields prompt/chosen/rejected");
        RawPair p{j["prompt"].get<std::string>(), j["chosen"].get<std::string>(),
                  j["rejected"].get<std::string>()};
        if (p.chosen.empty() || p.rejected.empty()) {
            warnings << "warning: " << path << ":" << lineno
                     << ": empty chosen/rejected, record skipped\n";
            continue;
        }
        out.push_back(std::move(p));
    }
    if (out.empty()) throw parse_error(path + ": no usable records");
    return out;
}

inline std::vector<PreferencePair> encode_pairs(const std::vector<RawPair>& raw,
                                                std::size_t context_len) {
    std::vector<PreferencePair> out;
    out.reserve(raw.size());
    for (const auto& r : raw) {
        EncodedPair ep = encode_pair(r.prompt, r.chosen, r.rejected, context_len);
        out.push_back({std::move(ep.prompt), std::move(ep.chosen), std::move(ep.rejected)});
    }
    return out;
}

inline std::vector<PreferencePair> load_pairs(const std::string& path, std::size_t context_len,
                                              std::ostream& warnings = std::cerr) {
    return encode_pairs(load_raw_pairs(path, warnings), context_len);
}

inline void save_jsonl(const std::string& path, const std::vector<RawPair>& pairs) {
    std::ofstream out(path);
    if (!out) throw parse_error("cannot write dataset: " + path);
    for (const auto& p : pairs) {
        nlohmann::json j;
        j["prompt"] = p.prompt;
        j["chosen"] = p.chosen;
        j["rejected"] = p.rejected;
        out << j.dump() << '\n';
    }
}

// Synthetic corpus with a controlled token-overlap fraction between the two
// responses of each pair. Three disjoint byte classes keep the bookkeeping
// exact: overlap tokens come from one class and appear at the same positions
// of both responses; the remainder is filled from per-side classes, so the
// response multiset intersection is exactly the shared span. overlap 1 gives
// identical responses, overlap 0 disjoint multisets.
inline std::vector<RawPair> synth_corpus(std::size_t n_pairs, double overlap_fraction,
                                         std::uint64_t seed) {
    if (!(overlap_fraction >= 0.0 && overlap_fraction <= 1.0))
        throw contract_error("synth_corpus: overlap fraction outside [0,1]");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> prompt_len(6, 12);
    std::uniform_int_distribution<int> resp_len(10, 16);
    std::uniform_int_distribution<int> shared_char('a', 'h');
    std::uniform_int_distribution<int> chosen_char('i', 'p');
    std::uniform_int_distribution<int> rejected_char('q', 'x');
    std::uniform_int_distribution<int> prompt_char('A', 'Z');

    std::vector<RawPair> out;
    out.reserve(n_pairs);
    for (std::size_t n = 0; n < n_pairs; ++n) {
        RawPair p;
        const int plen = prompt_len(rng);
        for (int i = 0; i < plen; ++i) p.prompt.push_back(static_cast<char>(prompt_char(rng)));

        const int len = resp_len(rng);
        const int shared = static_cast<int>(std::lround(overlap_fraction * len));
        std::vector<int> pos(len);
        for (int i = 0; i < len; ++i) pos[i] = i;
        std::shuffle(pos.begin(), pos.end(), rng);  // first `shared` entries host the overlap

        std::string chosen(len, '?'), rejected(len, '?');
        for (int i = 0; i < shared; ++i) {
            const char c = static_cast<char>(shared_char(rng));
            chosen[pos[i]] = c;
            rejected[pos[i]] = c;
        }
        for (int i = shared; i < len; ++i) {
            chosen[pos[i]] = static_cast<char>(chosen_char(rng));
            rejected[pos[i]] = static_cast<char>(rejected_char(rng));
        }
        p.chosen = std::move(chosen);
        p.rejected = std::move(rejected);
        out.push_back(std::move(p));
    }
    return out;
}

// Multiset intersection of response bytes over mean response length, averaged
// over the corpus.
inline double measure_overlap(const std::vector<RawPair>& corpus) {
    if (corpus.empty()) throw contract_error("measure_overlap: empty corpus");
    double acc = 0.0;
    for (const auto& p : corpus) {
        std::array<int, 256> cc{}, rc{};
        for (unsigned char c : p.chosen) ++cc[c];
        for (unsigned char c : p.rejected) ++rc[c];
        int inter = 0;
        for (int i = 0; i < 256; ++i) inter += std::min(cc[i], rc[i]);
        const double mean_len = 0.5 * (static_cast<double>(p.chosen.size()) +
                                       static_cast<double>(p.rejected.size()));
        acc += static_cast<double>(inter) / mean_len;
    }
    return acc / static_cast<double>(corpus.size());
}

struct SplitPairs {
    std::vector<RawPair> train, holdout;
};

// Deterministic shuffled split; holdout_fraction of the corpus (rounded down,
// at least 1 when the fraction is positive) goes to the holdout.
inline SplitPairs split_pairs(const std::vector<RawPair>& corpus, double holdout_fraction,
                              std::uint64_t seed) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        throw contract_error("split_pairs: holdout fraction outside [0,1)");
    std::vector<std::size_t> idx(corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t k = static_cast<std::size_t>(holdout_fraction * static_cast<double>(corpus.size()));
    if (holdout_fraction > 0.0 && k == 0 && !corpus.empty()) k = 1;
    SplitPairs sp;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < k ? sp.holdout : sp.train).push_back(corpus[idx[i]]);
    return sp;
}

}  // namespace aao
