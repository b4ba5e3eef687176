#pragma once

#include <random>
#include <vector>

#include "ttad/data.hpp"
#include "ttad/nn.hpp"
#include "ttad/tensor.hpp"

namespace ttad {

// Per-window, per-channel normalization statistics. The guard keeps the
// divisor at least eps so constant channels normalize to zeros, while
// windows with real variance keep an exactly scale-covariant divisor.
struct NormStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std_guarded;
    double eps = 1e-5;
};

struct NormalizedWindow {
    std::vector<double> values;  // w x D row-major, z-scored
    int64_t window = 0;
    int64_t channels = 0;
    NormStats stats;
};

// Flattened patches; row i is patch i over all channels, time-major.
struct PatchSet {
    std::vector<double> values;  // n_patches x (patch * D)
    int64_t n_patches = 0;
    int64_t patch = 0;
    int64_t patch_stride = 0;
    int64_t channels = 0;

    int64_t patch_len() const { return patch * channels; }
};

NormalizedWindow instance_norm(const std::vector<double>& window_values, int64_t window, int64_t channels,
                               double eps = 1e-5);
std::vector<double> denormalize(const NormalizedWindow& w);

PatchSet patchify(const NormalizedWindow& w, int64_t patch, int64_t patch_stride);
// Inverse of patchify when patch_stride == patch; takes raw rows (n x patch*D).
std::vector<double> unpatch(const std::vector<double>& rows, int64_t n_patches, int64_t patch, int64_t channels);

// floor(mask_ratio * n) distinct indices, uniform without replacement, ascending.
std::vector<int64_t> mask_patches(int64_t n_patches, double mask_ratio, std::mt19937_64& rng);

struct TimeEncoderParams {
    Linear embed;        // patch*D -> d
    Tensor mask_token;   // 1 x d, substituted before positions are added
    Tensor positional;   // max_patches x d, learned
    std::vector<TransformerLayerParams> layers;
    int64_t d_model = 0;
    int64_t max_patches = 0;

    static TimeEncoderParams init(int64_t patch_len, int64_t d_model, int layers, int heads, int64_t ffn_hidden,
                                  int64_t max_patches, std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Shared-weight encoder: masked and unmasked branches call this with the
// same parameter struct. masked lists patch rows replaced by the mask token.
Tensor encode_time(const TimeEncoderParams& params, const PatchSet& patches, const std::vector<int64_t>& masked);

std::vector<double> window_values(const SeriesDataset& ds, int64_t start, int64_t window);

}  // namespace ttad
