#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ttad/align.hpp"
#include "ttad/condenser.hpp"
#include "ttad/config.hpp"
#include "ttad/data.hpp"
#include "ttad/recon.hpp"
#include "ttad/text_branch.hpp"
#include "ttad/time_branch.hpp"

namespace ttad {

struct ModelParams {
    TimeEncoderParams time_enc;
    TextEncoderParams text_enc;
    Tensor no_context;  // 1 x d, stands in when a window has no documents
    FusionParams fusion;
    CondenserParams condenser;
    ReconParams recon;
    int64_t channels = 0;

    static ModelParams init(const RunConfig& cfg, int64_t channels, uint64_t seed);
    NamedParams collect() const;  // stable order; checkpoint layout depends on it
};

struct ForwardOutput {
    Tensor loss_total, loss_ma, loss_cc, loss_sm, loss_rec;
    Tensor h_time_masked, h_time_full;  // N x d
    Tensor z_text, z_con;               // N x d
    Tensor psi, gate;                   // N
    Tensor x_hat_rows;                  // N x (patch*D), normalized domain
    PatchSet patches;                   // normalized inputs
    std::vector<int64_t> masked;
};

// One window end to end. rng supplies mask positions and gate draws; it is
// only advanced in training mode or when eval.infer_mask_ratio > 0.
ForwardOutput model_forward(const ModelParams& mp, const RunConfig& cfg, const SeriesDataset& ds,
                            int64_t win_start, const std::vector<TextDoc>& docs,
                            const std::vector<int64_t>& doc_idx, MaskMode mode, std::mt19937_64& rng);

// Squared reconstruction error per timestamp, averaged over channels and over
// patches covering the timestamp. Normalized domain, length == window.
std::vector<double> per_timestamp_error(const ForwardOutput& out);

void save_checkpoint(const std::string& path, const ModelParams& mp, const Adam* opt, int64_t epoch,
                     double best_loss);
struct CheckpointMeta {
    int64_t epoch = 0;
    double best_loss = 0.0;
    bool has_optimizer = false;
};
// Restores parameter values (shapes must match) and, when present and opt is
// non-null, the optimizer state.
CheckpointMeta load_checkpoint(const std::string& path, ModelParams& mp, Adam* opt);

struct EpochStats {
    int64_t epoch = 0;
    double loss_ma = 0.0, loss_cc = 0.0, loss_sm = 0.0, loss_rec = 0.0;
    double total() const { return loss_ma + loss_cc + loss_sm + loss_rec; }
};

struct TrainResult {
    std::vector<EpochStats> log;   // epochs run in this call
    double best_loss = 0.0;
    int64_t epochs_completed = 0;  // cumulative, including resumed epochs
};

// Trains on the series prefix, writing train_log.csv, checkpoint_last.json
// and checkpoint_best.json under out_dir. An existing checkpoint_last.json
// resumes; resumed runs replay the exact schedule of a straight run.
TrainResult train_model(const RunConfig& cfg, const SeriesDataset& train_split,
                        const std::vector<TextDoc>& docs, const std::string& out_dir,
                        std::ostream* console = nullptr);

struct ScoreOptions {
    std::string dump_dir;  // when set, honors eval.psi_dump / eval.ktt_dump
};

// Stride-driven scoring over the given split; every timestamp must be covered.
ScoreSeries score_dataset(const ModelParams& mp, const RunConfig& cfg, const SeriesDataset& ds,
                          const std::vector<TextDoc>& docs, const ScoreOptions& opt = {});

}  // namespace ttad
