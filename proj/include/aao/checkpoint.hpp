#pragma once

// Flat binary checkpoint: policy, threshold head, and the frozen reference.
//
// Layout (all integers little-endian):
//   magic   "AAOC"
//   u32     format version (1)
//   u32     meta count, then per entry: u32 key length, key bytes, i64 value
//   u32     tensor count, then per tensor:
//             u32 name length, name bytes,
//             u32 rank, u64 dims[rank],
//             f64 values (row-major, IEEE-754 bit pattern)
// Tensor names: embed.table, blockN.{wq,wk,wv,wo,ff1.w,ff1.b,ff2.w,ff2.b},
// head.out (untied only), thresh.{w1,b1,w2,b2}, and the same set under ref.
// for the reference copy (which has no thresh.*).

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "aao/ambiguity.hpp"
#include "aao/errors.hpp"
#include "aao/model.hpp"
#include "aao/tensor.hpp"

namespace aao {

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, 8);
    put_u64(os, bits);
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw parse_error(path + ": truncated checkpoint");
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw parse_error(path + ": truncated checkpoint");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

inline double get_f64(std::istream& is, const std::string& path) {
    const std::uint64_t bits = get_u64(is, path);
    double x;
    std::memcpy(&x, &bits, 8);
    return x;
}

inline std::string get_str(std::istream& is, const std::string& path) {
    const std::uint32_t n = get_u32(is, path);
    std::string s(n, '\0');
    if (n && !is.read(s.data(), n)) throw parse_error(path + ": truncated checkpoint");
    return s;
}

inline void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(os, d);
    for (double x : t.values()) put_f64(os, x);
}

// Names model tensors with an optional prefix (used for the "ref." copy).
inline void collect(std::map<std::string, Tensor>& out, const TinyCausalLM& m,
                    const std::string& prefix) {
    out[prefix + "embed.table"] = m.table;
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        const std::string base = prefix + "block" + std::to_string(b) + ".";
        out[base + "wq"] = m.blocks[b].wq;
        out[base + "wk"] = m.blocks[b].wk;
        out[base + "wv"] = m.blocks[b].wv;
        out[base + "wo"] = m.blocks[b].wo;
        out[base + "ff1.w"] = m.blocks[b].ff1_w;
        out[base + "ff1.b"] = m.blocks[b].ff1_b;
        out[base + "ff2.w"] = m.blocks[b].ff2_w;
        out[base + "ff2.b"] = m.blocks[b].ff2_b;
    }
    if (!m.shape.tie_output) out[prefix + "head.out"] = m.head;
}

}  // namespace detail

struct Checkpoint {
    TinyCausalLM policy;
    ThresholdHead head;
    TinyCausalLM reference;
};

inline void write_checkpoint(const std::string& path, const TinyCausalLM& policy,
                             const ThresholdHead& head, const TinyCausalLM& reference) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parse_error("cannot write checkpoint: " + path);
    os.write("AAOC", 4);
    detail::put_u32(os, kCheckpointVersion);

    const std::map<std::string, std::int64_t> meta{
        {"vocab_size", static_cast<std::int64_t>(policy.shape.vocab_size)},
        {"embed_dim", static_cast<std::int64_t>(policy.shape.embed_dim)},
        {"context_len", static_cast<std::int64_t>(policy.shape.context_len)},
        {"num_blocks", static_cast<std::int64_t>(policy.shape.num_blocks)},
        {"tie_output", policy.shape.tie_output ? 1 : 0},
        {"head_hidden", static_cast<std::int64_t>(head.hidden_width())},
    };
    detail::put_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::put_str(os, k);
        detail::put_u64(os, static_cast<std::uint64_t>(v));
    }

    std::map<std::string, Tensor> tensors;
    detail::collect(tensors, policy, "");
    detail::collect(tensors, reference, "ref.");
    tensors["thresh.w1"] = head.w1;
    tensors["thresh.b1"] = head.b1;
    tensors["thresh.w2"] = head.w2;
    tensors["thresh.b2"] = head.b2;

    detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) detail::put_tensor(os, name, t);
    if (!os) throw parse_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw parse_error("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "AAOC", 4) != 0)
        throw parse_error(path + ": not a checkpoint file");
    const std::uint32_t version = detail::get_u32(is, path);
    if (version != kCheckpointVersion)
        throw parse_error(path + ": unsupported checkpoint version " + std::to_string(version));

    std::map<std::string, std::int64_t> meta;
    const std::uint32_t nmeta = detail::get_u32(is, path);
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        const std::string k = detail::get_str(is, path);
        meta[k] = static_cast<std::int64_t>(detail::get_u64(is, path));
    }
    auto need = [&](const char* k) {
        auto it = meta.find(k);
        if (it == meta.end()) throw parse_error(path + ": missing meta key " + k);
        return it->second;
    };
    ModelShape shape;
    shape.vocab_size = static_cast<std::size_t>(need("vocab_size"));
    shape.embed_dim = static_cast<std::size_t>(need("embed_dim"));
    shape.context_len = static_cast<std::size_t>(need("context_len"));
    shape.num_blocks = static_cast<std::size_t>(need("num_blocks"));
    shape.tie_output = need("tie_output") != 0;
    const std::size_t head_hidden = static_cast<std::size_t>(need("head_hidden"));

    std::map<std::string, Tensor> tensors;
    const std::uint32_t ntensors = detail::get_u32(is, path);
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        const std::string name = detail::get_str(is, path);
        const std::uint32_t rank = detail::get_u32(is, path);
        if (rank > 2) throw parse_error(path + ": tensor " + name + " has unsupported rank");
        Shape s;
        for (std::uint32_t r = 0; r < rank; ++r)
            s.push_back(static_cast<std::size_t>(detail::get_u64(is, path)));
        Tensor t = Tensor::zeros(s);
        for (std::size_t j = 0; j < t.numel(); ++j) t.at(j) = detail::get_f64(is, path);
        tensors[name] = t;
    }

    auto take = [&](const std::string& name, const Shape& want, bool requires_grad) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw parse_error(path + ": missing tensor " + name);
        if (it->second.shape() != want)
            throw parse_error(path + ": tensor " + name + " has shape " +
                              shape_str(it->second.shape()) + ", expected " + shape_str(want));
        Tensor t = it->second;
        t.set_requires_grad(requires_grad);
        tensors.erase(it);
        return t;
    };

    auto load_model = [&](const std::string& prefix, bool requires_grad) {
        TinyCausalLM m;
        m.shape = shape;
        const std::size_t d = shape.embed_dim, f = 4 * shape.embed_dim, v = shape.vocab_size;
        m.table = take(prefix + "embed.table", {v, d}, requires_grad);
        for (std::size_t b = 0; b < shape.num_blocks; ++b) {
            const std::string base = prefix + "block" + std::to_string(b) + ".";
            BlockParams blk;
            blk.wq = take(base + "wq", {d, d}, requires_grad);
            blk.wk = take(base + "wk", {d, d}, requires_grad);
            blk.wv = take(base + "wv", {d, d}, requires_grad);
            blk.wo = take(base + "wo", {d, d}, requires_grad);
            blk.ff1_w = take(base + "ff1.w", {d, f}, requires_grad);
            blk.ff1_b = take(base + "ff1.b", {f}, requires_grad);
            blk.ff2_w = take(base + "ff2.w", {f, d}, requires_grad);
            blk.ff2_b = take(base + "ff2.b", {d}, requires_grad);
            m.blocks.push_back(std::move(blk));
        }
        if (!shape.tie_output) m.head = take(prefix + "head.out", {d, v}, requires_grad);
        return m;
    };

    Checkpoint cp;
    cp.policy = load_model("", true);
    cp.reference = load_model("ref.", false);
    cp.head.w1 = take("thresh.w1", {shape.vocab_size, head_hidden}, true);
    cp.head.b1 = take("thresh.b1", {head_hidden}, true);
    cp.head.w2 = take("thresh.w2", {head_hidden, 2}, true);
    cp.head.b2 = take("thresh.b2", {2}, true);
    if (!tensors.empty())
        throw parse_error(path + ": unexpected tensor " + tensors.begin()->first);
    return cp;
}

}  // namespace aao
