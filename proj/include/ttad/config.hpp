#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttad/data.hpp"
#include "ttad/text_branch.hpp"

namespace ttad {

struct DataConfig {
    std::string series;  // CSV path
    std::string text;    // JSONL path, may be empty
    double train_frac = 0.7;
    WindowSpec window;
};

struct ModelConfig {
    int d_model = 64;
    int layers = 2;
    int heads = 4;
    int ffn_mult = 4;
    int vocab = 4096;
    int max_patches = 64;
    int exo_kmax = 8;
    bool exo_pooled = false;
    double tau = 0.07;
    bool symmetric_denominator = true;
    // Wiring switches for ablations.
    bool use_exo = true;
    bool use_endo = true;
    bool cross_modal = true;
    bool reversed_order = false;
    EndoTextOptions endo;
};

struct CondenserConfig {
    double mu = 0.5;
    bool bypass = false;
    bool variant_time_conditioned = false;
    bool infer_soft = false;
};

struct TrainConfig {
    int epochs = 20;
    int batch = 32;
    int train_stride = 0;  // 0: reuse data.window.stride
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 0;
    bool use_align = true;
    bool use_condenser_loss = true;
    bool use_smooth = true;
    bool use_recon = true;
    bool rec_sum = false;  // unnormalized reconstruction objective
};

struct EvalConfig {
    int score_stride = 1;
    double infer_mask_ratio = 0.0;
    double threshold_ratio = 0.05;
    double range_alpha = 0.0;
    int vus_grid_points = 16;
    double vus_lmax = 0.0;  // 0: derived from event lengths
    double vus_l0 = 0.0;
    bool ktt_dump = false;  // write the time-text similarity matrix per window
    bool psi_dump = false;  // write retention probabilities per window
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    CondenserConfig condenser;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;  // throws std::invalid_argument on bad values
    std::string to_json(int indent = 2) const;
};

// Strict parse: unknown keys anywhere in the document are an error.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Named wiring presets for comparative runs. Throws on unknown name.
extern const std::vector<std::string> kAblationNames;
void apply_ablation(RunConfig& cfg, const std::string& name);

}  // namespace ttad
