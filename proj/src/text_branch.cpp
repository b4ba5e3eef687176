#include "ttad/text_branch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ttad/common.hpp"

namespace ttad {

namespace {

struct PatchStats {
    double mean, min, max, median, slope;
    int64_t toplag;
};

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PatchStats patch_stats(const double* row, int64_t p, int64_t channels) {
    PatchStats s{0.0, 0.0, 0.0, 0.0, 0.0, 0};
    std::vector<double> chan_mean_seq(static_cast<size_t>(p), 0.0);
    for (int64_t c = 0; c < channels; ++c) {
        std::vector<double> xs(static_cast<size_t>(p));
        for (int64_t t = 0; t < p; ++t) xs[static_cast<size_t>(t)] = row[t * channels + c];
        double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(p);
        s.mean += mu;
        s.min += *std::min_element(xs.begin(), xs.end());
        s.max += *std::max_element(xs.begin(), xs.end());
        s.median += median_of(xs);
        for (int64_t t = 0; t < p; ++t) chan_mean_seq[static_cast<size_t>(t)] += xs[static_cast<size_t>(t)];
    }
    double dc = static_cast<double>(channels);
    s.mean /= dc;
    s.min /= dc;
    s.max /= dc;
    s.median /= dc;
    for (double& x : chan_mean_seq) x /= dc;

    // Least-squares slope of the channel-mean sequence.
    double tbar = 0.5 * static_cast<double>(p - 1);
    double ybar = std::accumulate(chan_mean_seq.begin(), chan_mean_seq.end(), 0.0) / static_cast<double>(p);
    double num = 0.0, den = 0.0;
    for (int64_t t = 0; t < p; ++t) {
        double dt = static_cast<double>(t) - tbar;
        num += dt * (chan_mean_seq[static_cast<size_t>(t)] - ybar);
        den += dt * dt;
    }
    s.slope = den > 0.0 ? num / den : 0.0;

    // Dominant autocorrelation lag of the channel-mean sequence; the shared
    // variance denominator cancels in the argmax. Degenerate cases report 0.
    s.toplag = 0;
    if (p >= 3) {
        std::vector<double> cgap(static_cast<size_t>(p));
        double var = 0.0;
        for (int64_t t = 0; t < p; ++t) {
            cgap[static_cast<size_t>(t)] = chan_mean_seq[static_cast<size_t>(t)] - ybar;
            var += cgap[static_cast<size_t>(t)] * cgap[static_cast<size_t>(t)];
        }
        if (var > 0.0) {
            double best = -std::numeric_limits<double>::infinity();
            for (int64_t k = 1; k < p; ++k) {
                double r = 0.0;
                for (int64_t t = 0; t + k < p; ++t)
                    r += cgap[static_cast<size_t>(t)] * cgap[static_cast<size_t>(t + k)];
                if (r > best) {
                    best = r;
                    s.toplag = k;
                }
            }
        }
    }
    return s;
}

constexpr double kTrendDeadZone = 0.01;

}  // namespace

std::vector<std::string> gen_endotext(const PatchSet& patches, const EndoTextOptions& opt) {
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(patches.n_patches));
    for (int64_t i = 0; i < patches.n_patches; ++i) {
        PatchStats s = patch_stats(patches.values.data() + i * patches.patch_len(), patches.patch, patches.channels);
        const char* trend = std::fabs(s.slope) < kTrendDeadZone ? "flat" : (s.slope > 0.0 ? "rising" : "falling");
        std::string text;
        if (!opt.template_variant) {
            text = "patch stats: mean " + format_fixed(s.mean, 3);
            if (!opt.drop_minmaxmedian)
                text += " min " + format_fixed(s.min, 3) + " max " + format_fixed(s.max, 3) + " median " +
                        format_fixed(s.median, 3);
            if (!opt.drop_trend) text += std::string(" trend ") + trend;
            if (!opt.drop_lag) text += " toplag " + std::to_string(s.toplag);
        } else {
            text = "segment summary: avg " + format_fixed(s.mean, 3);
            if (!opt.drop_minmaxmedian)
                text += " low " + format_fixed(s.min, 3) + " high " + format_fixed(s.max, 3) + " mid " +
                        format_fixed(s.median, 3);
            if (!opt.drop_trend) text += std::string(" direction ") + trend;
            if (!opt.drop_lag) text += " lag " + std::to_string(s.toplag);
        }
        out.push_back(std::move(text));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

bool token_char(char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '.' || ch == '-' || ch == '+';
}

}  // namespace

std::vector<std::string> Tokenizer::words(const std::string& text) const {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        char ch = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (token_char(ch)) {
            cur += ch;
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);

    // Numeric literals collapse into quarter-width buckets so nearby values
    // share a token; everything else hashes as-is.
    for (std::string& w : out) {
        double v;
        auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
        if (ec == std::errc() && p == w.data() + w.size() && std::isfinite(v)) {
            int64_t bucket = static_cast<int64_t>(std::floor(v / 0.25));
            bucket = std::clamp<int64_t>(bucket, -32, 31);
            w = "num" + std::to_string(bucket);
        }
    }
    return out;
}

int64_t Tokenizer::id_of(const std::string& word) const {
    return static_cast<int64_t>(fnv1a(word) % static_cast<uint64_t>(vocab));
}

std::vector<int64_t> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int64_t> ids;
    for (const std::string& w : words(text)) ids.push_back(id_of(w));
    return ids;
}

std::map<std::string, int64_t> Tokenizer::vocab_map(const std::vector<std::string>& corpus) const {
    std::map<std::string, int64_t> out;
    for (const std::string& text : corpus)
        for (const std::string& w : words(text)) out.emplace(w, id_of(w));
    return out;
}

// ---------------------------------------------------------------------------
// Encoders

TextEncoderParams TextEncoderParams::init(int64_t vocab, int64_t d_model, int heads, int64_t ffn_hidden,
                                          std::mt19937_64& rng) {
    TextEncoderParams p;
    p.d_model = d_model;
    p.token_embedding = xavier_uniform(vocab, d_model, rng);
    p.block = TransformerLayerParams::init(d_model, heads, ffn_hidden, rng);
    p.pre_proj = Linear::init(d_model, d_model, rng);
    return p;
}

void TextEncoderParams::collect(const std::string& prefix, NamedParams& out) const {
    add_param(out, prefix + ".token_embedding", token_embedding);
    block.collect(prefix + ".block", out);
    pre_proj.collect(prefix + ".pre_proj", out);
}

Tensor encode_text(const TextEncoderParams& params, const Tokenizer& tok, const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("encode_text: no texts");
    std::vector<Tensor> rows;
    rows.reserve(texts.size());
    for (const std::string& t : texts) {
        if (t.empty()) throw std::invalid_argument("encode_text: empty string");
        std::vector<int64_t> ids = tok.tokenize(t);
        Tensor pooled;
        if (ids.empty()) {
            pooled = Tensor::zeros({1, params.d_model});
        } else {
            Tensor emb = take_rows(params.token_embedding, ids);
            pooled = reshape(sum_axis(emb, 0) * (1.0 / static_cast<double>(ids.size())), {1, params.d_model});
        }
        rows.push_back(params.block.apply(pooled));
    }
    return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

Tensor encode_doc_embedding(const TextEncoderParams& params, const std::vector<double>& embedding) {
    if (static_cast<int64_t>(embedding.size()) != params.d_model)
        throw std::invalid_argument("doc embedding length does not match model width");
    return params.pre_proj.apply(Tensor::from({1, params.d_model}, embedding));
}

Tensor pool_exo(const TextEncoderParams& params, const Tokenizer& tok, const Tensor& no_context,
                const std::vector<TextDoc>& docs, const std::vector<int64_t>& doc_indices, int64_t win_lo,
                int64_t win_hi, const ExoPoolOptions& opt) {
    if (doc_indices.empty()) return no_context;

    struct Ranked {
        int64_t overlap;
        int64_t start;
        int64_t idx;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(doc_indices.size());
    for (int64_t di : doc_indices) {
        const TextDoc& d = docs[static_cast<size_t>(di)];
        int64_t ov = std::min(d.end, win_hi) - std::max(d.start, win_lo);
        ranked.push_back({ov, d.start, di});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        return a.start < b.start;
    });
    int64_t keep = std::min<int64_t>(opt.k_max, static_cast<int64_t>(ranked.size()));

    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(keep));
    for (int64_t i = 0; i < keep; ++i) {
        const TextDoc& d = docs[static_cast<size_t>(ranked[static_cast<size_t>(i)].idx)];
        if (d.has_embedding())
            rows.push_back(encode_doc_embedding(params, d.embedding));
        else
            rows.push_back(encode_text(params, tok, {d.text}));
    }
    Tensor h = rows.size() == 1 ? rows[0] : concat_rows(rows);
    if (opt.pooled && h.rows() > 1)
        h = reshape(sum_axis(h, 0) * (1.0 / static_cast<double>(h.rows())), {1, h.cols()});
    return h;
}

FusionParams FusionParams::init(int64_t d_model, int heads, int64_t ffn_hidden, std::mt19937_64& rng) {
    FusionParams p;
    p.cross = AttentionParams::init(d_model, heads, rng);
    p.ffn = FeedForwardParams::init(d_model, ffn_hidden, rng);
    p.ln_attn = LayerNormParams::init(d_model);
    p.ln_ffn = LayerNormParams::init(d_model);
    return p;
}

void FusionParams::collect(const std::string& prefix, NamedParams& out) const {
    cross.collect(prefix + ".cross", out);
    ffn.collect(prefix + ".ffn", out);
    ln_attn.collect(prefix + ".ln_attn", out);
    ln_ffn.collect(prefix + ".ln_ffn", out);
}

Tensor cross_view_fuse(const FusionParams& params, const Tensor& h_endo, const Tensor& h_exo) {
    Tensor zhat = params.ln_attn.apply(h_endo + params.cross.apply(h_endo, h_exo, h_exo));
    return params.ln_ffn.apply(zhat + params.ffn.apply(zhat));
}

}  // namespace ttad
