#include "ttad/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttad/common.hpp"
#include "ttad/config.hpp"
#include "ttad/data.hpp"
#include "ttad/metrics.hpp"
#include "ttad/model.hpp"

namespace ttad {

namespace {

namespace fs = std::filesystem;

struct LoadedData {
    SeriesDataset series;
    std::vector<TextDoc> docs;
};

LoadedData load_inputs(const RunConfig& cfg, std::ostream& err) {
    LoadedData d;
    if (cfg.data.series.empty()) throw std::runtime_error("config error: data.series: path is required");
    std::vector<std::string> warnings;
    d.series = load_series(cfg.data.series, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    if (!cfg.data.text.empty()) d.docs = load_text(cfg.data.text, cfg.model.d_model);
    return d;
}

int64_t train_count(const SeriesDataset& ds, double train_frac) {
    return static_cast<int64_t>(std::floor(train_frac * static_cast<double>(ds.length())));
}

SeriesDataset pick_split(const SeriesDataset& ds, const std::string& split, double train_frac) {
    const int64_t n_train = train_count(ds, train_frac);
    if (split == "train") return ds.slice(0, n_train);
    if (split == "test") return ds.slice(n_train, ds.length());
    if (split == "all") return ds;
    throw std::runtime_error("unknown split: " + split);
}

EvalOptions eval_options(const RunConfig& cfg) {
    EvalOptions o;
    o.threshold_ratio = cfg.eval.threshold_ratio;
    o.range_alpha = cfg.eval.range_alpha;
    o.vus.grid_points = cfg.eval.vus_grid_points;
    o.vus.lmax = cfg.eval.vus_lmax;
    o.vus.l0 = cfg.eval.vus_l0;
    return o;
}

// Matches score rows to ground-truth labels through timestamps.
std::vector<uint8_t> truth_for_scores(const ScoreSeries& s, const SeriesDataset& ds) {
    if (!ds.has_labels()) throw std::runtime_error("series file carries no label column");
    std::unordered_map<int64_t, uint8_t> by_ts;
    by_ts.reserve(static_cast<size_t>(ds.length()));
    for (int64_t t = 0; t < ds.length(); ++t)
        by_ts.emplace(ds.timestamps[static_cast<size_t>(t)], ds.labels[static_cast<size_t>(t)]);
    std::vector<uint8_t> truth;
    truth.reserve(s.timestamps.size());
    for (int64_t ts : s.timestamps) {
        auto it = by_ts.find(ts);
        if (it == by_ts.end())
            throw std::runtime_error("scores reference timestamp " + std::to_string(ts) +
                                     " absent from the series file");
        truth.push_back(it->second);
    }
    return truth;
}

MetricReport evaluate_scores(const ScoreSeries& s, const SeriesDataset& labeled, const RunConfig& cfg) {
    auto truth = truth_for_scores(s, labeled);
    std::vector<uint8_t> pred = s.has_labels() ? s.labels : threshold_labels(s.scores, cfg.eval.threshold_ratio);
    return compute_metrics(s.scores, pred, truth, eval_options(cfg));
}

std::string metric_cell(const std::optional<double>& v) { return v ? format_fixed(*v, 4) : "n/a"; }

int cmd_synth(const SynthConfig& sc, uint64_t seed, const std::string& out_dir, std::ostream& out) {
    fs::create_directories(out_dir);
    SynthData data = synth_multimodal(sc, seed);
    save_series(out_dir + "/series.csv", data.series);
    save_text(out_dir + "/text.jsonl", data.docs);
    save_events(out_dir + "/events.json", data.events, seed);
    out << "wrote " << out_dir << "/series.csv (" << data.series.length() << " rows, "
        << data.series.channels << " channels), " << data.docs.size() << " docs, " << data.events.size()
        << " events\n";
    return 0;
}

int cmd_train(RunConfig cfg, const std::string& out_dir, std::ostream& out, std::ostream& err) {
    auto data = load_inputs(cfg, err);
    auto train_split = data.series.slice(0, train_count(data.series, cfg.data.train_frac));
    auto result = train_model(cfg, train_split, data.docs, out_dir, &out);
    out << "training finished: " << result.epochs_completed << " epochs, best total loss "
        << format_fixed(result.best_loss, 6) << "\n";
    return 0;
}

int cmd_detect(RunConfig cfg, const std::string& model_path, const std::string& split,
               const std::string& out_dir, std::ostream& out, std::ostream& err) {
    auto data = load_inputs(cfg, err);
    auto eval_split = pick_split(data.series, split, cfg.data.train_frac);

    ModelParams mp = ModelParams::init(cfg, data.series.channels, cfg.train.seed);
    load_checkpoint(model_path, mp, nullptr);

    fs::create_directories(out_dir);
    ScoreOptions so;
    so.dump_dir = out_dir;
    ScoreSeries scores = score_dataset(mp, cfg, eval_split, data.docs, so);
    const std::string path = out_dir + "/scores.csv";
    write_scores_csv(path, scores);
    out << "wrote " << path << " (" << scores.scores.size() << " timestamps)\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& scores_path, const std::string& series_path,
             const std::string& out_dir, std::ostream& out, std::ostream& err) {
    ScoreSeries s = read_scores_csv(scores_path);
    std::vector<std::string> warnings;
    SeriesDataset labeled = load_series(series_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    MetricReport report = evaluate_scores(s, labeled, cfg);
    std::string text = report.to_json();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream f(out_dir + "/metrics.json", std::ios::binary);
        f << text << "\n";
        if (!f) throw std::runtime_error("cannot write metrics to " + out_dir);
    }
    out << text << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& base, const std::vector<std::string>& variants, int seeds,
               const std::string& out_dir, std::ostream& out, std::ostream& err) {
    auto data = load_inputs(base, err);
    if (!data.series.has_labels()) throw std::runtime_error("ablate requires a labeled series");
    const int64_t n_train = train_count(data.series, base.data.train_frac);
    auto train_split = data.series.slice(0, n_train);
    auto test_split = data.series.slice(n_train, data.series.length());

    nlohmann::ordered_json all = nlohmann::ordered_json::object();
    std::vector<std::pair<std::string, MetricReport>> headline;

    for (const auto& name : variants) {
        RunConfig cfg = base;
        apply_ablation(cfg, name);
        nlohmann::ordered_json per_variant = nlohmann::ordered_json::object();
        nlohmann::ordered_json seed_list = nlohmann::ordered_json::array();

        // Mean over seeds, metric by metric, skipping undefined entries.
        std::vector<MetricReport> reports;
        for (int k = 0; k < seeds; ++k) {
            cfg.train.seed = base.train.seed + static_cast<uint64_t>(k);
            const std::string dir = out_dir + "/" + name + "/seed" + std::to_string(k);
            train_model(cfg, train_split, data.docs, dir, nullptr);
            ModelParams mp = ModelParams::init(cfg, data.series.channels, cfg.train.seed);
            load_checkpoint(dir + "/checkpoint_best.json", mp, nullptr);
            ScoreSeries scores = score_dataset(mp, cfg, test_split, data.docs, {});
            MetricReport rep = evaluate_scores(scores, data.series, cfg);
            reports.push_back(rep);
            seed_list.push_back(nlohmann::ordered_json::parse(rep.to_json()));
            err << "ablate " << name << " seed " << k << " done\n";
        }

        MetricReport mean;
        auto avg = [&](std::optional<double> MetricReport::* field) {
            double acc = 0.0;
            int n = 0;
            for (const auto& r : reports)
                if (r.*field) {
                    acc += *(r.*field);
                    ++n;
                }
            if (n > 0) mean.*field = acc / n;
        };
        avg(&MetricReport::accuracy);
        avg(&MetricReport::precision);
        avg(&MetricReport::recall);
        avg(&MetricReport::f1);
        avg(&MetricReport::range_precision);
        avg(&MetricReport::range_recall);
        avg(&MetricReport::range_f1);
        avg(&MetricReport::affiliation_precision);
        avg(&MetricReport::affiliation_recall);
        avg(&MetricReport::affiliation_f1);
        avg(&MetricReport::auc_roc);
        avg(&MetricReport::auc_pr);
        avg(&MetricReport::range_auc_roc);
        avg(&MetricReport::range_auc_pr);
        avg(&MetricReport::vus_roc);
        avg(&MetricReport::vus_pr);

        per_variant["seeds"] = std::move(seed_list);
        per_variant["mean"] = nlohmann::ordered_json::parse(mean.to_json());
        all[name] = std::move(per_variant);
        headline.emplace_back(name, mean);
    }

    fs::create_directories(out_dir);
    nlohmann::ordered_json root;
    root["seed_base"] = base.train.seed;
    root["seeds"] = seeds;
    root["variants"] = std::move(all);
    {
        std::ofstream f(out_dir + "/ablation.json", std::ios::binary);
        f << root.dump(2) << "\n";
        if (!f) throw std::runtime_error("cannot write " + out_dir + "/ablation.json");
    }

    out << "variant             vus_pr  vus_roc auc_pr  auc_roc aff_f1  f1\n";
    for (const auto& [name, m] : headline) {
        std::string row = name;
        row.resize(20, ' ');
        out << row << metric_cell(m.vus_pr) << "  " << metric_cell(m.vus_roc) << "  "
            << metric_cell(m.auc_pr) << "  " << metric_cell(m.auc_roc) << "  "
            << metric_cell(m.affiliation_f1) << "  " << metric_cell(m.f1) << "\n";
    }
    out << "wrote " << out_dir << "/ablation.json\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"multimodal time-series anomaly detection"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labeled synthetic series with documents");
    SynthConfig sc;
    uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--n", sc.n, "series length");
    synth->add_option("--channels", sc.channels, "channel count");
    synth->add_option("--anomaly-ratio", sc.anomaly_ratio, "fraction of anomalous timestamps");
    synth->add_option("--distractor-rate", sc.distractor_rate, "distractor docs per injected event");
    synth->add_option("--noise-sigma", sc.noise_sigma, "gaussian noise level");
    synth->add_option("--ts-start", sc.ts_start, "first timestamp");
    synth->add_option("--ts-step", sc.ts_step, "timestamp increment");

    // train
    auto* train = app.add_subcommand("train", "train a model on the series prefix");
    std::string train_config, train_out, train_ablate;
    uint64_t train_seed = 0;
    train->add_option("--config", train_config, "config JSON path")->required();
    train->add_option("--out", train_out, "run directory")->required();
    auto* train_seed_opt = train->add_option("--seed", train_seed, "override train.seed");
    train->add_option("--ablate", train_ablate, "wiring variant to apply")
        ->check(CLI::IsMember(kAblationNames));

    // detect
    auto* detect = app.add_subcommand("detect", "score a split with a trained model");
    std::string det_config, det_model, det_out, det_split = "test", det_ablate;
    double det_ratio = 0.0;
    detect->add_option("--config", det_config, "config JSON path")->required();
    detect->add_option("--model", det_model, "checkpoint path")->required();
    detect->add_option("--out", det_out, "output directory")->required();
    detect->add_option("--split", det_split, "train|test|all")
        ->check(CLI::IsMember({"train", "test", "all"}));
    detect->add_option("--ablate", det_ablate, "wiring variant to apply")
        ->check(CLI::IsMember(kAblationNames));
    auto* det_ratio_opt = detect->add_option("--threshold-ratio", det_ratio, "override eval.threshold_ratio");

    // eval
    auto* eval = app.add_subcommand("eval", "compute the metric battery for a score file");
    std::string ev_config, ev_scores, ev_series, ev_out;
    eval->add_option("--config", ev_config, "config JSON path")->required();
    eval->add_option("--scores", ev_scores, "scores CSV path")->required();
    eval->add_option("--series", ev_series, "labeled series CSV path")->required();
    eval->add_option("--out", ev_out, "optional output directory for metrics.json");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and compare wiring variants");
    std::string ab_config, ab_out, ab_variants;
    int ab_seeds = 1;
    ablate->add_option("--config", ab_config, "config JSON path")->required();
    ablate->add_option("--out", ab_out, "output directory")->required();
    ablate->add_option("--variants", ab_variants, "comma-separated variant names (default: all)");
    ablate->add_option("--seeds", ab_seeds, "seeds per variant")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (app.got_subcommand(synth)) return cmd_synth(sc, synth_seed, synth_out, out);
        if (app.got_subcommand(train)) {
            RunConfig cfg = load_config(train_config);
            if (train_seed_opt->count() > 0) cfg.train.seed = train_seed;
            if (!train_ablate.empty()) apply_ablation(cfg, train_ablate);
            return cmd_train(cfg, train_out, out, err);
        }
        if (app.got_subcommand(detect)) {
            RunConfig cfg = load_config(det_config);
            if (!det_ablate.empty()) apply_ablation(cfg, det_ablate);
            if (det_ratio_opt->count() > 0) {
                if (det_ratio <= 0.0 || det_ratio > 1.0)
                    throw std::runtime_error("--threshold-ratio must lie in (0, 1]");
                cfg.eval.threshold_ratio = det_ratio;
            }
            return cmd_detect(cfg, det_model, det_split, det_out, out, err);
        }
        if (app.got_subcommand(eval))
            return cmd_eval(load_config(ev_config), ev_scores, ev_series, ev_out, out, err);
        if (app.got_subcommand(ablate)) {
            std::vector<std::string> variants;
            if (ab_variants.empty()) {
                variants = kAblationNames;
            } else {
                std::stringstream ss(ab_variants);
                std::string item;
                while (std::getline(ss, item, ',')) variants.push_back(item);
                for (const auto& v : variants) {
                    if (std::find(kAblationNames.begin(), kAblationNames.end(), v) == kAblationNames.end())
                        throw std::runtime_error("unknown ablation: " + v);
                }
            }
            return cmd_ablate(load_config(ab_config), variants, ab_seeds, ab_out, out, err);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand selected\n";
    return 1;
}

}  // namespace ttad
