#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttad/nn.hpp"
#include "ttad/tensor.hpp"

namespace ttad {

struct ReconParams {
    AttentionParams self_attn;  // refines the condensed text tokens
    AttentionParams cross;      // masked time tokens query the text
    FeedForwardParams ffn;
    Linear proj;  // d -> patch * D

    static ReconParams init(int64_t d_model, int heads, int64_t ffn_hidden, int64_t patch_len,
                            std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Zcon' = SelfAttn(Zcon); U = FFN(Htime + CrossAttn(Htime, Zcon', Zcon'));
// rows are projected back to flattened patches.
Tensor reconstruct(const ReconParams& params, const Tensor& h_time_masked, const Tensor& z_con);

// Frobenius reconstruction error; mean mode divides by the full element count.
Tensor loss_rec(const Tensor& target_rows, const Tensor& recon_rows, bool sum_mode = false);

// Per-timestamp scores averaged over every window covering the timestamp.
class ScoreAccumulator {
  public:
    explicit ScoreAccumulator(int64_t length) : sum_(static_cast<size_t>(length), 0.0),
                                                count_(static_cast<size_t>(length), 0) {}
    void add_window(int64_t start, const std::vector<double>& per_timestamp_err);
    // Errors if any timestamp is uncovered.
    std::vector<double> finalize() const;

  private:
    std::vector<double> sum_;
    std::vector<int64_t> count_;
};

// Flags ceil(ratio * T) highest scores; ties resolved toward earlier timestamps.
std::vector<uint8_t> threshold_labels(const std::vector<double>& scores, double ratio);

struct ScoreSeries {
    std::vector<int64_t> timestamps;
    std::vector<double> scores;
    std::vector<uint8_t> labels;  // optional predicted labels

    bool has_labels() const { return !labels.empty(); }
};

void write_scores_csv(const std::string& path, const ScoreSeries& s);
ScoreSeries read_scores_csv(const std::string& path);

}  // namespace ttad
