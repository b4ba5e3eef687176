#include "ttad/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "ttad/common.hpp"

namespace ttad {

namespace {

// Stream purposes under the run seed. Every draw is re-derivable from
// (seed, purpose, epoch, window), which is what makes resume exact.
constexpr uint64_t kInitStream = 10;
constexpr uint64_t kShuffleStream = 11;
constexpr uint64_t kWindowStream = 12;
constexpr uint64_t kScoreStream = 13;

void require_finite(const Tensor& t, const char* term) {
    if (!std::isfinite(t.item())) throw std::runtime_error(std::string(term) + " loss is non-finite");
}

}  // namespace

ModelParams ModelParams::init(const RunConfig& cfg, int64_t channels, uint64_t seed) {
    if (channels <= 0) throw std::invalid_argument("model init: channels must be positive");
    auto rng = make_rng(seed, kInitStream);
    const auto& m = cfg.model;
    const int64_t d = m.d_model;
    const int64_t ffn_hidden = static_cast<int64_t>(m.ffn_mult) * d;
    const int64_t patch_len = cfg.data.window.patch * channels;

    ModelParams p;
    p.channels = channels;
    p.time_enc = TimeEncoderParams::init(patch_len, d, m.layers, m.heads, ffn_hidden, m.max_patches, rng);
    p.text_enc = TextEncoderParams::init(m.vocab, d, m.heads, ffn_hidden, rng);
    p.no_context = xavier_uniform(1, d, rng);
    p.fusion = FusionParams::init(d, m.heads, ffn_hidden, rng);
    p.condenser = CondenserParams::init(d, cfg.condenser.variant_time_conditioned, rng);
    p.recon = ReconParams::init(d, m.heads, ffn_hidden, patch_len, rng);
    return p;
}

NamedParams ModelParams::collect() const {
    NamedParams out;
    time_enc.collect("time", out);
    text_enc.collect("text", out);
    add_param(out, "no_context", no_context);
    fusion.collect("fusion", out);
    condenser.collect("condenser", out);
    recon.collect("recon", out);
    return out;
}

ForwardOutput model_forward(const ModelParams& mp, const RunConfig& cfg, const SeriesDataset& ds,
                            int64_t win_start, const std::vector<TextDoc>& docs,
                            const std::vector<int64_t>& doc_idx, MaskMode mode, std::mt19937_64& rng) {
    const WindowSpec& ws = cfg.data.window;
    const int64_t d = cfg.model.d_model;

    ForwardOutput out;
    auto raw = window_values(ds, win_start, ws.window);
    auto norm = instance_norm(raw, ws.window, ds.channels);
    out.patches = patchify(norm, ws.patch, ws.patch_stride);
    const int64_t n = out.patches.n_patches;

    double mask_ratio = mode == MaskMode::kTrain ? ws.mask_ratio : cfg.eval.infer_mask_ratio;
    if (mask_ratio > 0.0) out.masked = mask_patches(n, mask_ratio, rng);

    out.h_time_masked = encode_time(mp.time_enc, out.patches, out.masked);
    out.h_time_full = out.masked.empty() ? out.h_time_masked : encode_time(mp.time_enc, out.patches, {});

    // Text view: per-patch descriptors fused with pooled document context.
    Tokenizer tok{cfg.model.vocab};
    Tensor h_endo;
    if (cfg.model.use_endo) {
        h_endo = encode_text(mp.text_enc, tok, gen_endotext(out.patches, cfg.model.endo));
    } else {
        h_endo = Tensor::zeros({n, d});
    }
    ExoPoolOptions exo_opt{cfg.model.exo_kmax, cfg.model.exo_pooled};
    const int64_t ts_lo = ds.timestamps[static_cast<size_t>(win_start)];
    const int64_t ts_hi = ds.timestamps[static_cast<size_t>(win_start + ws.window - 1)];
    Tensor h_exo = cfg.model.use_exo
                       ? pool_exo(mp.text_enc, tok, mp.no_context, docs, doc_idx, ts_lo, ts_hi, exo_opt)
                       : pool_exo(mp.text_enc, tok, mp.no_context, docs, {}, ts_lo, ts_hi, exo_opt);
    out.z_text = cross_view_fuse(mp.fusion, h_endo, h_exo);

    if (cfg.condenser.bypass) {
        out.psi = Tensor::full({n}, 1.0);
        out.gate = Tensor::full({n}, 1.0);
        out.z_con = out.z_text;
    } else {
        const Tensor* cond_time = cfg.condenser.variant_time_conditioned ? &out.h_time_full : nullptr;
        out.psi = retention_probs(mp.condenser, out.z_text, cond_time);
        if (mode == MaskMode::kInfer && cfg.condenser.infer_soft) {
            out.gate = out.psi;
        } else {
            out.gate = sample_mask(out.psi, mode, &rng);
        }
        out.z_con = condense(out.z_text, out.gate);
    }

    Tensor zero = Tensor::scalar(0.0);
    if (cfg.train.use_align) {
        const Tensor& text_side = cfg.model.reversed_order ? out.z_con : out.z_text;
        out.loss_ma = loss_ma(out.h_time_full, text_side,
                              AlignLossOptions{cfg.model.tau, cfg.model.symmetric_denominator});
    } else {
        out.loss_ma = zero;
    }
    bool condenser_loss = cfg.train.use_condenser_loss && !cfg.condenser.bypass;
    out.loss_cc = condenser_loss ? loss_cc(out.psi, cfg.condenser.mu) : zero;
    out.loss_sm = (condenser_loss && cfg.train.use_smooth) ? loss_sm(out.psi) : zero;

    Tensor z_dec = cfg.model.cross_modal ? out.z_con : Tensor::zeros({n, d});
    out.x_hat_rows = reconstruct(mp.recon, out.h_time_masked, z_dec);
    Tensor target = Tensor::from({n, out.patches.patch_len()}, out.patches.values);
    out.loss_rec = cfg.train.use_recon ? loss_rec(target, out.x_hat_rows, cfg.train.rec_sum) : zero;

    require_finite(out.loss_ma, "alignment");
    require_finite(out.loss_cc, "compression");
    require_finite(out.loss_sm, "smoothness");
    require_finite(out.loss_rec, "reconstruction");
    out.loss_total = out.loss_ma + out.loss_cc + out.loss_sm + out.loss_rec;
    return out;
}

std::vector<double> per_timestamp_error(const ForwardOutput& out) {
    const PatchSet& ps = out.patches;
    const int64_t window = (ps.n_patches - 1) * ps.patch_stride + ps.patch;
    std::vector<double> errsum(static_cast<size_t>(window), 0.0);
    std::vector<int64_t> cover(static_cast<size_t>(window), 0);
    const auto& xhat = out.x_hat_rows.data();
    for (int64_t i = 0; i < ps.n_patches; ++i) {
        for (int64_t j = 0; j < ps.patch; ++j) {
            const int64_t t = i * ps.patch_stride + j;
            double acc = 0.0;
            for (int64_t c = 0; c < ps.channels; ++c) {
                const size_t k = static_cast<size_t>(i * ps.patch_len() + j * ps.channels + c);
                const double diff = xhat[k] - ps.values[k];
                acc += diff * diff;
            }
            errsum[static_cast<size_t>(t)] += acc / static_cast<double>(ps.channels);
            ++cover[static_cast<size_t>(t)];
        }
    }
    std::vector<double> err(static_cast<size_t>(window), 0.0);
    for (int64_t t = 0; t < window; ++t) {
        if (cover[static_cast<size_t>(t)] == 0)
            throw std::runtime_error("patch geometry leaves a timestamp unreconstructed");
        err[static_cast<size_t>(t)] =
            errsum[static_cast<size_t>(t)] / static_cast<double>(cover[static_cast<size_t>(t)]);
    }
    return err;
}

void save_checkpoint(const std::string& path, const ModelParams& mp, const Adam* opt, int64_t epoch,
                     double best_loss) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["epoch"] = epoch;
    j["best_loss"] = best_loss;
    j["channels"] = mp.channels;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    auto named = mp.collect();
    for (const auto& [name, t] : named) {
        params[name] = {{"shape", t.shape()}, {"data", t.data()}};
    }
    j["params"] = std::move(params);
    if (opt) {
        nlohmann::ordered_json m = nlohmann::ordered_json::object();
        nlohmann::ordered_json v = nlohmann::ordered_json::object();
        auto& mm = const_cast<Adam*>(opt)->m();
        auto& vv = const_cast<Adam*>(opt)->v();
        for (size_t i = 0; i < named.size(); ++i) {
            m[named[i].first] = mm[i];
            v[named[i].first] = vv[i];
        }
        j["adam"] = {{"step", opt->step_count()}, {"m", std::move(m)}, {"v", std::move(v)}};
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump();
    out.put('\n');
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ModelParams& mp, Adam* opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint parse error in " + path + ": " + e.what());
    }
    if (!j.contains("version") || !j.at("version").is_number_integer() || j.at("version").get<int>() != 1)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    if (j.at("channels").get<int64_t>() != mp.channels)
        throw std::runtime_error("checkpoint channel count does not match the data");

    auto named = mp.collect();
    const auto& params = j.at("params");
    if (params.size() != named.size())
        throw std::runtime_error("checkpoint parameter set does not match the model");
    for (auto& [name, t] : named) {
        if (!params.contains(name)) throw std::runtime_error("checkpoint missing parameter: " + name);
        const auto& entry = params.at(name);
        auto shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != t.shape()) throw std::runtime_error("checkpoint shape mismatch for " + name);
        auto data = entry.at("data").get<std::vector<double>>();
        if (static_cast<int64_t>(data.size()) != t.size())
            throw std::runtime_error("checkpoint size mismatch for " + name);
        t.mutable_data() = std::move(data);
    }

    CheckpointMeta meta;
    meta.epoch = j.at("epoch").get<int64_t>();
    meta.best_loss = j.at("best_loss").get<double>();
    if (opt && j.contains("adam")) {
        const auto& a = j.at("adam");
        for (size_t i = 0; i < named.size(); ++i) {
            opt->m()[i] = a.at("m").at(named[i].first).get<std::vector<double>>();
            opt->v()[i] = a.at("v").at(named[i].first).get<std::vector<double>>();
            if (opt->m()[i].size() != static_cast<size_t>(named[i].second.size()) ||
                opt->v()[i].size() != static_cast<size_t>(named[i].second.size()))
                throw std::runtime_error("checkpoint optimizer state mismatch for " + named[i].first);
        }
        opt->set_step(a.at("step").get<int64_t>());
        meta.has_optimizer = true;
    }
    return meta;
}

TrainResult train_model(const RunConfig& cfg, const SeriesDataset& train_split,
                        const std::vector<TextDoc>& docs, const std::string& out_dir,
                        std::ostream* console) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string last_path = out_dir + "/checkpoint_last.json";
    const std::string best_path = out_dir + "/checkpoint_best.json";
    const std::string log_path = out_dir + "/train_log.csv";

    ModelParams mp = ModelParams::init(cfg, train_split.channels, cfg.train.seed);
    auto named = mp.collect();
    std::vector<Tensor> opt_params;
    opt_params.reserve(named.size());
    for (auto& [name, t] : named) opt_params.push_back(t);
    Adam adam(opt_params, AdamConfig{cfg.train.lr, cfg.train.beta1, cfg.train.beta2, cfg.train.eps});

    int64_t start_epoch = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    if (fs::exists(last_path)) {
        auto meta = load_checkpoint(last_path, mp, &adam);
        start_epoch = meta.epoch;
        best_loss = meta.best_loss;
        if (console) *console << "resuming from epoch " << start_epoch << "\n";
    }

    {
        std::ofstream cfg_out(out_dir + "/config.json", std::ios::binary);
        cfg_out << cfg.to_json() << "\n";
    }

    const int64_t stride = cfg.train.train_stride > 0 ? cfg.train.train_stride : cfg.data.window.stride;
    auto starts = make_windows(train_split.length(), cfg.data.window.window, stride);
    std::vector<std::vector<int64_t>> doc_idx(starts.size());
    for (size_t i = 0; i < starts.size(); ++i)
        doc_idx[i] = docs_for_window(docs, train_split, starts[i], cfg.data.window.window);

    std::ofstream log(log_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write training log: " + log_path);
    if (start_epoch == 0) log << "epoch,loss_ma,loss_cc,loss_sm,loss_rec\n";

    TrainResult result;
    result.best_loss = best_loss;
    result.epochs_completed = start_epoch;

    for (int64_t epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
        std::vector<size_t> order(starts.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto shuffle_rng = make_rng(cfg.train.seed, kShuffleStream, static_cast<uint64_t>(epoch));
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

        EpochStats stats;
        stats.epoch = epoch;
        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(cfg.train.batch)) {
            const size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(cfg.train.batch));
            adam.zero_grad();
            for (size_t i = b0; i < b1; ++i) {
                const size_t w = order[i];
                auto rng = make_rng(cfg.train.seed, kWindowStream, static_cast<uint64_t>(epoch),
                                    static_cast<uint64_t>(starts[w]));
                ForwardOutput out;
                try {
                    out = model_forward(mp, cfg, train_split, starts[w], docs, doc_idx[w], MaskMode::kTrain,
                                        rng);
                } catch (const std::exception& e) {
                    throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                             ", window " + std::to_string(starts[w]) + ": " + e.what());
                }
                stats.loss_ma += out.loss_ma.item();
                stats.loss_cc += out.loss_cc.item();
                stats.loss_sm += out.loss_sm.item();
                stats.loss_rec += out.loss_rec.item();
                backward(out.loss_total * (1.0 / static_cast<double>(b1 - b0)));
            }
            adam.step();
        }
        const double inv = 1.0 / static_cast<double>(starts.size());
        stats.loss_ma *= inv;
        stats.loss_cc *= inv;
        stats.loss_sm *= inv;
        stats.loss_rec *= inv;
        result.log.push_back(stats);
        result.epochs_completed = epoch + 1;

        log << epoch << ',' << format_roundtrip(stats.loss_ma) << ',' << format_roundtrip(stats.loss_cc)
            << ',' << format_roundtrip(stats.loss_sm) << ',' << format_roundtrip(stats.loss_rec) << "\n";
        log.flush();
        if (console) {
            *console << "epoch " << (epoch + 1) << "/" << cfg.train.epochs << " loss_ma="
                     << format_fixed(stats.loss_ma, 6) << " loss_cc=" << format_fixed(stats.loss_cc, 6)
                     << " loss_sm=" << format_fixed(stats.loss_sm, 6)
                     << " loss_rec=" << format_fixed(stats.loss_rec, 6)
                     << " total=" << format_fixed(stats.total(), 6) << "\n";
        }

        save_checkpoint(last_path, mp, &adam, epoch + 1, std::min(best_loss, stats.total()));
        if (stats.total() < best_loss) {
            best_loss = stats.total();
            result.best_loss = best_loss;
            save_checkpoint(best_path, mp, nullptr, epoch + 1, best_loss);
        }
    }
    return result;
}

ScoreSeries score_dataset(const ModelParams& mp, const RunConfig& cfg, const SeriesDataset& ds,
                          const std::vector<TextDoc>& docs, const ScoreOptions& opt) {
    NoGradGuard guard;
    const WindowSpec& ws = cfg.data.window;
    auto starts = make_windows(ds.length(), ws.window, cfg.eval.score_stride);
    ScoreAccumulator acc(ds.length());

    const bool dump_psi = !opt.dump_dir.empty() && cfg.eval.psi_dump;
    const bool dump_ktt = !opt.dump_dir.empty() && cfg.eval.ktt_dump;
    std::ofstream psi_out;
    if (dump_psi || dump_ktt) std::filesystem::create_directories(opt.dump_dir);
    if (dump_psi) {
        psi_out.open(opt.dump_dir + "/psi.csv", std::ios::trunc);
        psi_out << "window_start,patch,psi,gate\n";
    }

    for (size_t w = 0; w < starts.size(); ++w) {
        auto rng = make_rng(cfg.train.seed, kScoreStream, static_cast<uint64_t>(starts[w]));
        auto idx = docs_for_window(docs, ds, starts[w], ws.window);
        auto out = model_forward(mp, cfg, ds, starts[w], docs, idx, MaskMode::kInfer, rng);
        acc.add_window(starts[w], per_timestamp_error(out));
        if (dump_psi) {
            for (int64_t i = 0; i < out.psi.size(); ++i)
                psi_out << starts[w] << ',' << i << ',' << format_roundtrip(out.psi.at(i)) << ','
                        << format_roundtrip(out.gate.at(i)) << "\n";
        }
        if (dump_ktt) {
            const Tensor& text_side = cfg.model.reversed_order ? out.z_con : out.z_text;
            Tensor sim = similarity_matrix(out.h_time_full, text_side);
            write_similarity_csv(opt.dump_dir + "/ktt_" + std::to_string(starts[w]) + ".csv", sim);
        }
    }

    ScoreSeries s;
    s.timestamps = ds.timestamps;
    s.scores = acc.finalize();
    s.labels = threshold_labels(s.scores, cfg.eval.threshold_ratio);
    return s;
}

}  // namespace ttad
