#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttad/data.hpp"
#include "ttad/nn.hpp"
#include "ttad/tensor.hpp"
#include "ttad/time_branch.hpp"

namespace ttad {

// Descriptor toggles for the per-patch prompt.
struct EndoTextOptions {
    bool drop_minmaxmedian = false;
    bool drop_trend = false;
    bool drop_lag = false;
    bool template_variant = false;
};

// One deterministic descriptor string per patch, computed on normalized values
// with 3-decimal rounding. Multichannel stats are averaged across channels.
std::vector<std::string> gen_endotext(const PatchSet& patches, const EndoTextOptions& opt = {});

// Stateless hashing tokenizer: lowercase, split on non-token characters,
// bucket numeric literals, then FNV-1a into [0, vocab).
struct Tokenizer {
    int64_t vocab = 4096;

    std::vector<int64_t> tokenize(const std::string& text) const;
    std::vector<std::string> words(const std::string& text) const;  // post-normalization tokens
    int64_t id_of(const std::string& word) const;
    // token -> id over a corpus, for the vocabulary dump interface.
    std::map<std::string, int64_t> vocab_map(const std::vector<std::string>& corpus) const;
};

struct TextEncoderParams {
    Tensor token_embedding;        // vocab x d
    TransformerLayerParams block;  // applied per text, no cross-text attention
    Linear pre_proj;               // adapter for precomputed doc embeddings
    int64_t d_model = 0;

    static TextEncoderParams init(int64_t vocab, int64_t d_model, int heads, int64_t ffn_hidden,
                                  std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Mean-pooled token embeddings refined by one per-text transformer layer.
Tensor encode_text(const TextEncoderParams& params, const Tokenizer& tok, const std::vector<std::string>& texts);
// Precomputed-embedding bypass: linear projection only.
Tensor encode_doc_embedding(const TextEncoderParams& params, const std::vector<double>& embedding);

struct ExoPoolOptions {
    int64_t k_max = 8;
    bool pooled = false;  // collapse the kept docs to a single mean token
};

// Encoded exogenous tokens for one window: up to k_max docs ranked by
// descending overlap with [win_lo, win_hi], ties by earlier start. With no
// docs the learned no-context token is the single row.
Tensor pool_exo(const TextEncoderParams& params, const Tokenizer& tok, const Tensor& no_context,
                const std::vector<TextDoc>& docs, const std::vector<int64_t>& doc_indices, int64_t win_lo,
                int64_t win_hi, const ExoPoolOptions& opt);

struct FusionParams {
    AttentionParams cross;
    FeedForwardParams ffn;
    LayerNormParams ln_attn, ln_ffn;

    static FusionParams init(int64_t d_model, int heads, int64_t ffn_hidden, std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Post-norm fusion with the endogenous side as query:
// Zhat = LN(H_O + CrossAttn(H_O, H_C, H_C)); Z = LN(Zhat + FFN(Zhat)).
Tensor cross_view_fuse(const FusionParams& params, const Tensor& h_endo, const Tensor& h_exo);

}  // namespace ttad
