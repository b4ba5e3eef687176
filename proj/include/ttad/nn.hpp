#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ttad/tensor.hpp"

namespace ttad {

// Ordered name -> tensor listing; ordering fixes checkpoint layout.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline void add_param(NamedParams& out, const std::string& name, const Tensor& t) {
    out.emplace_back(name, t);
}

struct Linear {
    Tensor w, b;

    static Linear init(int64_t in, int64_t out, std::mt19937_64& rng) {
        Linear l;
        l.w = xavier_uniform(in, out, rng);
        l.b = Tensor::zeros({out}, true);
        return l;
    }
    Tensor apply(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }
    void collect(const std::string& prefix, NamedParams& out) const {
        add_param(out, prefix + ".w", w);
        add_param(out, prefix + ".b", b);
    }
};

struct LayerNormParams {
    Tensor gain, bias;
    double eps = 1e-5;

    static LayerNormParams init(int64_t d) {
        LayerNormParams p;
        p.gain = Tensor::full({d}, 1.0, true);
        p.bias = Tensor::zeros({d}, true);
        return p;
    }
    Tensor apply(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
    void collect(const std::string& prefix, NamedParams& out) const {
        add_param(out, prefix + ".gain", gain);
        add_param(out, prefix + ".bias", bias);
    }
};

// Q/K/V/output projections around the multi-head attention core.
struct AttentionParams {
    Tensor wq, wk, wv, wo;
    int heads = 1;

    static AttentionParams init(int64_t d, int heads, std::mt19937_64& rng) {
        AttentionParams p;
        p.wq = xavier_uniform(d, d, rng);
        p.wk = xavier_uniform(d, d, rng);
        p.wv = xavier_uniform(d, d, rng);
        p.wo = xavier_uniform(d, d, rng);
        p.heads = heads;
        return p;
    }
    Tensor apply(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in) const {
        return attention(matmul(q_in, wq), matmul(k_in, wk), matmul(v_in, wv), heads, wo);
    }
    void collect(const std::string& prefix, NamedParams& out) const {
        add_param(out, prefix + ".wq", wq);
        add_param(out, prefix + ".wk", wk);
        add_param(out, prefix + ".wv", wv);
        add_param(out, prefix + ".wo", wo);
    }
};

struct FeedForwardParams {
    Linear fc1, fc2;

    static FeedForwardParams init(int64_t d, int64_t hidden, std::mt19937_64& rng) {
        FeedForwardParams p;
        p.fc1 = Linear::init(d, hidden, rng);
        p.fc2 = Linear::init(hidden, d, rng);
        return p;
    }
    Tensor apply(const Tensor& x) const { return fc2.apply(gelu(fc1.apply(x))); }
    void collect(const std::string& prefix, NamedParams& out) const {
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

// Pre-norm transformer layer: x += Attn(LN(x)); x += FFN(LN(x)).
struct TransformerLayerParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FeedForwardParams ffn;

    static TransformerLayerParams init(int64_t d, int heads, int64_t ffn_hidden, std::mt19937_64& rng) {
        TransformerLayerParams p;
        p.ln1 = LayerNormParams::init(d);
        p.ln2 = LayerNormParams::init(d);
        p.attn = AttentionParams::init(d, heads, rng);
        p.ffn = FeedForwardParams::init(d, ffn_hidden, rng);
        return p;
    }
    Tensor apply(const Tensor& x) const {
        Tensor h = ln1.apply(x);
        Tensor y = x + attn.apply(h, h, h);
        return y + ffn.apply(ln2.apply(y));
    }
    void collect(const std::string& prefix, NamedParams& out) const {
        ln1.collect(prefix + ".ln1", out);
        ln2.collect(prefix + ".ln2", out);
        attn.collect(prefix + ".attn", out);
        ffn.collect(prefix + ".ffn", out);
    }
};

}  // namespace ttad
