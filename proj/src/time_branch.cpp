#include "ttad/time_branch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ttad {

NormalizedWindow instance_norm(const std::vector<double>& window_values, int64_t window, int64_t channels,
                               double eps) {
    if (window < 2) throw std::invalid_argument("instance_norm: window must be >= 2");
    if (static_cast<int64_t>(window_values.size()) != window * channels)
        throw std::invalid_argument("instance_norm: value count does not match window x channels");
    NormalizedWindow out;
    out.window = window;
    out.channels = channels;
    out.stats.eps = eps;
    out.stats.mean.resize(static_cast<size_t>(channels));
    out.stats.std_guarded.resize(static_cast<size_t>(channels));
    out.values.resize(window_values.size());
    for (int64_t c = 0; c < channels; ++c) {
        double mu = 0.0;
        for (int64_t t = 0; t < window; ++t) mu += window_values[static_cast<size_t>(t * channels + c)];
        mu /= static_cast<double>(window);
        double var = 0.0;
        for (int64_t t = 0; t < window; ++t) {
            double d = window_values[static_cast<size_t>(t * channels + c)] - mu;
            var += d * d;
        }
        var /= static_cast<double>(window);  // population statistics
        double sd = std::max(std::sqrt(var), eps);
        out.stats.mean[static_cast<size_t>(c)] = mu;
        out.stats.std_guarded[static_cast<size_t>(c)] = sd;
        for (int64_t t = 0; t < window; ++t)
            out.values[static_cast<size_t>(t * channels + c)] =
                (window_values[static_cast<size_t>(t * channels + c)] - mu) / sd;
    }
    return out;
}

std::vector<double> denormalize(const NormalizedWindow& w) {
    std::vector<double> out(w.values.size());
    for (int64_t t = 0; t < w.window; ++t)
        for (int64_t c = 0; c < w.channels; ++c) {
            size_t at = static_cast<size_t>(t * w.channels + c);
            out[at] = w.values[at] * w.stats.std_guarded[static_cast<size_t>(c)] + w.stats.mean[static_cast<size_t>(c)];
        }
    return out;
}

PatchSet patchify(const NormalizedWindow& w, int64_t patch, int64_t patch_stride) {
    if (patch < 1 || patch > w.window) throw std::invalid_argument("patchify: need 1 <= patch <= window");
    if (patch_stride < 1) throw std::invalid_argument("patchify: patch stride must be >= 1");
    if ((w.window - patch) % patch_stride != 0)
        throw std::invalid_argument("patchify: (window - patch) not divisible by patch stride");
    PatchSet ps;
    ps.n_patches = (w.window - patch) / patch_stride + 1;
    ps.patch = patch;
    ps.patch_stride = patch_stride;
    ps.channels = w.channels;
    ps.values.reserve(static_cast<size_t>(ps.n_patches * ps.patch_len()));
    for (int64_t i = 0; i < ps.n_patches; ++i) {
        int64_t t0 = i * patch_stride;
        for (int64_t t = 0; t < patch; ++t)
            for (int64_t c = 0; c < w.channels; ++c)
                ps.values.push_back(w.values[static_cast<size_t>((t0 + t) * w.channels + c)]);
    }
    return ps;
}

std::vector<double> unpatch(const std::vector<double>& rows, int64_t n_patches, int64_t patch, int64_t channels) {
    if (static_cast<int64_t>(rows.size()) != n_patches * patch * channels)
        throw std::invalid_argument("unpatch: row data size mismatch");
    // Non-overlapping layout (patch_stride == patch): rows concatenate back in time order.
    return rows;
}

std::vector<int64_t> mask_patches(int64_t n_patches, double mask_ratio, std::mt19937_64& rng) {
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw std::invalid_argument("mask_patches: ratio outside [0,1]");
    int64_t k = static_cast<int64_t>(std::floor(mask_ratio * static_cast<double>(n_patches)));
    std::vector<int64_t> idx(static_cast<size_t>(n_patches));
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first k entries are a uniform sample without replacement.
    for (int64_t i = 0; i < k; ++i) {
        int64_t j = i + static_cast<int64_t>(rng() % static_cast<uint64_t>(n_patches - i));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    idx.resize(static_cast<size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

TimeEncoderParams TimeEncoderParams::init(int64_t patch_len, int64_t d_model, int layers, int heads,
                                          int64_t ffn_hidden, int64_t max_patches, std::mt19937_64& rng) {
    TimeEncoderParams p;
    p.d_model = d_model;
    p.max_patches = max_patches;
    p.embed = Linear::init(patch_len, d_model, rng);
    p.mask_token = xavier_uniform(1, d_model, rng);
    p.positional = xavier_uniform(max_patches, d_model, rng);
    p.layers.reserve(static_cast<size_t>(layers));
    for (int i = 0; i < layers; ++i) p.layers.push_back(TransformerLayerParams::init(d_model, heads, ffn_hidden, rng));
    return p;
}

void TimeEncoderParams::collect(const std::string& prefix, NamedParams& out) const {
    embed.collect(prefix + ".embed", out);
    add_param(out, prefix + ".mask_token", mask_token);
    add_param(out, prefix + ".positional", positional);
    for (size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

Tensor encode_time(const TimeEncoderParams& params, const PatchSet& patches, const std::vector<int64_t>& masked) {
    int64_t n = patches.n_patches;
    if (n > params.max_patches)
        throw std::invalid_argument("encode_time: " + std::to_string(n) + " patches exceed positional table of " +
                                    std::to_string(params.max_patches));
    Tensor p = Tensor::from({n, patches.patch_len()}, patches.values);
    Tensor x = params.embed.apply(p);
    if (!masked.empty()) {
        std::vector<double> keep(static_cast<size_t>(n), 1.0), flag(static_cast<size_t>(n), 0.0);
        for (int64_t i : masked) {
            if (i < 0 || i >= n) throw std::invalid_argument("encode_time: masked index out of range");
            keep[static_cast<size_t>(i)] = 0.0;
            flag[static_cast<size_t>(i)] = 1.0;
        }
        // Zero masked rows, then route the learnable token into them.
        x = mul_colvec(x, Tensor::from({n}, keep)) +
            matmul(Tensor::from({n, 1}, flag), params.mask_token);
    }
    std::vector<int64_t> pos_idx(static_cast<size_t>(n));
    std::iota(pos_idx.begin(), pos_idx.end(), 0);
    x = x + take_rows(params.positional, pos_idx);
    for (size_t li = 0; li < params.layers.size(); ++li) {
        try {
            x = params.layers[li].apply(x);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("time encoder layer " + std::to_string(li) + ": " + e.what());
        }
    }
    return x;
}

std::vector<double> window_values(const SeriesDataset& ds, int64_t start, int64_t window) {
    if (start < 0 || start + window > ds.length()) throw std::invalid_argument("window_values: range out of bounds");
    return std::vector<double>(ds.values.begin() + start * ds.channels,
                               ds.values.begin() + (start + window) * ds.channels);
}

}  // namespace ttad
