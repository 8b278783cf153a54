#pragma once

// Byte-level tokenizer. Ids 0..255 are raw bytes; the tail of the table holds
// the control ids. No merges, no training, fully reversible for byte ids.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "aao/errors.hpp"

namespace aao {

struct Tokenizer {
    static constexpr int kByteCount = 256;
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kPad = 258;
    static constexpr int kUnk = 259;
    static constexpr int kVocabSize = 260;

    static std::vector<int> encode_bytes(const std::string& text) {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (unsigned char ch : text) ids.push_back(static_cast<int>(ch));
        return ids;
    }

    // BOS followed by the prompt bytes.
    static std::vector<int> encode_prompt(const std::string& prompt) {
        std::vector<int> ids;
        ids.reserve(prompt.size() + 1);
        ids.push_back(kBos);
        for (unsigned char ch : prompt) ids.push_back(static_cast<int>(ch));
        return ids;
    }

    // Response bytes followed by EOS.
    static std::vector<int> encode_response(const std::string& response) {
        std::vector<int> ids;
        ids.reserve(response.size() + 1);
        for (unsigned char ch : response) ids.push_back(static_cast<int>(ch));
        ids.push_back(kEos);
        return ids;
    }

    // Byte ids map back to their bytes; control ids render as markers.
    static std::string decode(const std::vector<int>& ids) {
        std::string out;
        for (int id : ids) {
            if (id >= 0 && id < kByteCount) {
                out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
            } else if (id == kBos) {
                out += "<bos>";
            } else if (id == kEos) {
                out += "<eos>";
            } else if (id == kPad) {
                out += "<pad>";
            } else if (id == kUnk) {
                out += "<unk>";
            } else {
                throw vocab_error("decode: id " + std::to_string(id) + " outside vocabulary");
            }
        }
        return out;
    }

    // Printable name for one id (used by the inspection report).
    static std::string token_name(int id) {
        if (id == kBos) return "<bos>";
        if (id == kEos) return "<eos>";
        if (id == kPad) return "<pad>";
        if (id == kUnk) return "<unk>";
        if (id < 0 || id >= kVocabSize)
            throw vocab_error("token_name: id " + std::to_string(id) + " outside vocabulary");
        const unsigned char ch = static_cast<unsigned char>(id);
        if (ch >= 0x21 && ch <= 0x7e) return std::string(1, static_cast<char>(ch));
        if (ch == ' ') return "<sp>";
        if (ch == '\n') return "<nl>";
        if (ch == '\t') return "<tab>";
        char buf[8];
        std::snprintf(buf, sizeof(buf), "<0x%02x>", ch);
        return std::string(buf);
    }
};

// Prompt + chosen/rejected response token ids for one preference pair.
struct EncodedPair {
    std::vector<int> prompt;    // starts with BOS
    std::vector<int> chosen;    // ends with EOS
    std::vector<int> rejected;  // ends with EOS
};

// Tokenizes a raw pair and left-truncates the prompt (keeping BOS) so that
// prompt plus the longer response fits in the model context.
inline EncodedPair encode_pair(const std::string& prompt, const std::string& chosen,
                               const std::string& rejected, std::size_t context_len) {
    EncodedPair ep;
    ep.prompt = Tokenizer::encode_prompt(prompt);
    ep.chosen = Tokenizer::encode_response(chosen);
    ep.rejected = Tokenizer::encode_response(rejected);
    const std::size_t resp = std::max(ep.chosen.size(), ep.rejected.size());
    if (resp + 1 > context_len)
        throw contract_error("encode_pair: response of " + std::to_string(resp) +
                             " tokens cannot fit a context of " + std::to_string(context_len));
    const std::size_t budget = context_len - resp;
    if (ep.prompt.size() > budget) {
        // Keep BOS, drop the oldest prompt bytes after it.
        std::vector<int> trimmed;
        trimmed.reserve(budget);
        trimmed.push_back(Tokenizer::kBos);
        trimmed.insert(trimmed.end(), ep.prompt.end() - (budget - 1), ep.prompt.end());
        ep.prompt = std::move(trimmed);
    }
    return ep;
}

}  // namespace aao
