#include "ttad/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ttad/common.hpp"

namespace ttad {

namespace {

using nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, int64_t row, const std::string& why) {
    throw std::runtime_error("parse error in " + path + " at row " + std::to_string(row) + ": " + why);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& path, int64_t row) {
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) parse_fail(path, row, "bad numeric value '" + s + "'");
    if (!std::isfinite(v)) parse_fail(path, row, "non-finite value '" + s + "'");
    return v;
}

int64_t parse_i64(const std::string& s, const std::string& path, int64_t row) {
    int64_t v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) parse_fail(path, row, "bad integer '" + s + "'");
    return v;
}

}  // namespace

void WindowSpec::validate() const {
    if (window < 2) throw std::invalid_argument("window spec: window must be >= 2");
    if (stride < 1) throw std::invalid_argument("window spec: stride must be >= 1");
    if (patch < 1 || patch > window) throw std::invalid_argument("window spec: need 1 <= patch <= window");
    if (patch_stride < 1) throw std::invalid_argument("window spec: patch stride must be >= 1");
    if ((window - patch) % patch_stride != 0)
        throw std::invalid_argument("window spec: (window - patch) must be divisible by patch stride");
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw std::invalid_argument("window spec: mask ratio outside [0,1]");
}

SeriesDataset SeriesDataset::slice(int64_t from, int64_t to) const {
    if (from < 0 || to > length() || from > to) throw std::invalid_argument("series slice: bad range");
    SeriesDataset out;
    out.channels = channels;
    out.timestamps.assign(timestamps.begin() + from, timestamps.begin() + to);
    out.values.assign(values.begin() + from * channels, values.begin() + to * channels);
    if (has_labels()) out.labels.assign(labels.begin() + from, labels.begin() + to);
    return out;
}

SeriesDataset load_series(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open series file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("parse error in " + path + " at row 1: empty file");
    std::vector<std::string> header = split_csv(line);
    if (header.empty() || header[0] != "timestamp")
        parse_fail(path, 1, "first column must be 'timestamp'");
    bool has_label = header.size() > 1 && header.back() == "label";
    int64_t d = static_cast<int64_t>(header.size()) - 1 - (has_label ? 1 : 0);
    if (d < 1) parse_fail(path, 1, "no value columns");

    struct Row {
        int64_t ts;
        std::vector<double> vals;
        uint8_t label;
        int64_t file_row;
    };
    std::vector<Row> rows;
    int64_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty()) continue;
        std::vector<std::string> f = split_csv(line);
        if (static_cast<int64_t>(f.size()) != static_cast<int64_t>(header.size()))
            parse_fail(path, rowno, "expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(f.size()));
        Row r;
        r.file_row = rowno;
        r.ts = parse_i64(f[0], path, rowno);
        r.vals.reserve(static_cast<size_t>(d));
        for (int64_t c = 0; c < d; ++c) r.vals.push_back(parse_double(f[static_cast<size_t>(1 + c)], path, rowno));
        r.label = 0;
        if (has_label) {
            const std::string& ls = f.back();
            if (ls == "0")
                r.label = 0;
            else if (ls == "1")
                r.label = 1;
            else
                parse_fail(path, rowno, "label must be 0 or 1, got '" + ls + "'");
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::runtime_error("parse error in " + path + ": no data rows");

    bool sorted = std::is_sorted(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
    if (!sorted) {
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.ts < b.ts; });
        if (warnings) warnings->push_back("series rows were not sorted by timestamp; sorted on load");
    }
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].ts == rows[i - 1].ts)
            parse_fail(path, rows[i].file_row, "duplicate timestamp " + std::to_string(rows[i].ts));
    }

    SeriesDataset ds;
    ds.channels = d;
    ds.timestamps.reserve(rows.size());
    ds.values.reserve(rows.size() * static_cast<size_t>(d));
    if (has_label) ds.labels.reserve(rows.size());
    for (const Row& r : rows) {
        ds.timestamps.push_back(r.ts);
        ds.values.insert(ds.values.end(), r.vals.begin(), r.vals.end());
        if (has_label) ds.labels.push_back(r.label);
    }
    return ds;
}

void save_series(const std::string& path, const SeriesDataset& ds) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write series file: " + path);
    out << "timestamp";
    for (int64_t c = 0; c < ds.channels; ++c) out << ",v" << c;
    if (ds.has_labels()) out << ",label";
    out << "\n";
    for (int64_t t = 0; t < ds.length(); ++t) {
        out << ds.timestamps[static_cast<size_t>(t)];
        for (int64_t c = 0; c < ds.channels; ++c) out << "," << format_roundtrip(ds.value(t, c));
        if (ds.has_labels()) out << "," << static_cast<int>(ds.labels[static_cast<size_t>(t)]);
        out << "\n";
    }
}

std::vector<TextDoc> load_text(const std::string& path, int64_t expect_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open text file: " + path);
    std::vector<TextDoc> docs;
    std::string line;
    int64_t rowno = 0;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            parse_fail(path, rowno, std::string("bad JSON: ") + e.what());
        }
        if (!j.is_object() || !j.contains("start") || !j.contains("end"))
            parse_fail(path, rowno, "doc must be an object with 'start' and 'end'");
        TextDoc doc;
        if (!j["start"].is_number_integer() || !j["end"].is_number_integer())
            parse_fail(path, rowno, "'start' and 'end' must be integers");
        doc.start = j["start"].get<int64_t>();
        doc.end = j["end"].get<int64_t>();
        if (doc.start > doc.end) parse_fail(path, rowno, "doc start exceeds end");
        if (j.contains("text")) {
            if (!j["text"].is_string()) parse_fail(path, rowno, "'text' must be a string");
            doc.text = j["text"].get<std::string>();
        }
        if (j.contains("embedding")) {
            if (!j["embedding"].is_array()) parse_fail(path, rowno, "'embedding' must be an array");
            for (const auto& v : j["embedding"]) {
                if (!v.is_number()) parse_fail(path, rowno, "embedding entries must be numbers");
                doc.embedding.push_back(v.get<double>());
            }
            if (expect_dim > 0 && static_cast<int64_t>(doc.embedding.size()) != expect_dim)
                parse_fail(path, rowno, "embedding length " + std::to_string(doc.embedding.size()) +
                                            " does not match configured model width " + std::to_string(expect_dim));
        }
        if (doc.text.empty() && !doc.has_embedding())
            parse_fail(path, rowno, "doc needs non-empty 'text' or an 'embedding'");
        docs.push_back(std::move(doc));
    }
    std::stable_sort(docs.begin(), docs.end(), [](const TextDoc& a, const TextDoc& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.text < b.text;
    });
    return docs;
}

void save_text(const std::string& path, const std::vector<TextDoc>& docs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write text file: " + path);
    for (const TextDoc& d : docs) {
        json j;
        j["start"] = d.start;
        j["end"] = d.end;
        if (!d.text.empty()) j["text"] = d.text;
        if (d.has_embedding()) j["embedding"] = d.embedding;
        out << j.dump() << "\n";
    }
}

std::vector<AnomalyEvent> load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open events file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("parse error in " + path + ": " + e.what());
    }
    std::vector<AnomalyEvent> out;
    for (const auto& e : j.at("events")) {
        AnomalyEvent ev;
        ev.kind = e.at("kind").get<std::string>();
        ev.start_index = e.at("start_index").get<int64_t>();
        ev.end_index = e.at("end_index").get<int64_t>();
        ev.start_ts = e.at("start_ts").get<int64_t>();
        ev.end_ts = e.at("end_ts").get<int64_t>();
        ev.channel = e.at("channel").get<int64_t>();
        out.push_back(std::move(ev));
    }
    return out;
}

void save_events(const std::string& path, const std::vector<AnomalyEvent>& events, uint64_t seed) {
    json j;
    j["seed"] = seed;
    int64_t pts = 0;
    json arr = json::array();
    for (const AnomalyEvent& e : events) {
        pts += e.end_index - e.start_index;
        arr.push_back({{"kind", e.kind},
                       {"start_index", e.start_index},
                       {"end_index", e.end_index},
                       {"start_ts", e.start_ts},
                       {"end_ts", e.end_ts},
                       {"channel", e.channel}});
    }
    j["events"] = std::move(arr);
    j["anomaly_points"] = pts;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write events file: " + path);
    out << j.dump(2) << "\n";
}

std::vector<int64_t> make_windows(int64_t series_len, int64_t window, int64_t stride) {
    if (window < 1 || stride < 1) throw std::invalid_argument("make_windows: window and stride must be >= 1");
    if (window > series_len)
        throw std::invalid_argument("make_windows: window length " + std::to_string(window) +
                                    " exceeds series length " + std::to_string(series_len));
    int64_t count = (series_len - window) / stride + 1;
    std::vector<int64_t> starts;
    starts.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) starts.push_back(i * stride);
    return starts;
}

std::vector<int64_t> docs_for_window(const std::vector<TextDoc>& docs, const SeriesDataset& ds,
                                     int64_t win_start, int64_t window) {
    int64_t lo = ds.timestamps[static_cast<size_t>(win_start)];
    int64_t hi = ds.timestamps[static_cast<size_t>(win_start + window - 1)];
    std::vector<int64_t> out;
    for (size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].start <= hi && docs[i].end >= lo) out.push_back(static_cast<int64_t>(i));
    }
    return out;
}

namespace {

// Deterministic normal deviates; avoids library-specific distribution state.
double gaussian(std::mt19937_64& rng) {
    double u1 = 0.0;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 1e-300);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
    // [lo, hi] inclusive; modulo bias is irrelevant at these range sizes.
    return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

const char* kSpikeText = "spike anomaly detected: sudden extreme deviation from the expected signal";
const char* kLevelText = "level shift anomaly: the signal baseline moved to a sustained new offset";
const char* kFreqText = "frequency shift anomaly: the oscillation period of the signal changed";

const char* kDistractorPool[] = {
    "routine maintenance window scheduled for the facility equipment",
    "quarterly report indicates steady operating figures across units",
    "staff rotation completed without incidents on the monitored site",
    "weather advisory mentions mild conditions for the coming period",
    "inventory audit shows stock levels within the usual bounds",
    "network upgrade in the office wing finished ahead of schedule",
    "visitor group toured the plant floor during the afternoon",
    "catering service confirmed the menu for the annual meeting",
};

double base_signal(double t, double warp, int64_t channel) {
    double ph1 = 0.7 * static_cast<double>(channel);
    double ph2 = 1.3 * static_cast<double>(channel);
    return std::sin(2.0 * M_PI * t * warp / 48.0 + ph1) + 0.4 * std::sin(2.0 * M_PI * t * warp / 12.0 + ph2);
}

}  // namespace

SynthData synth_multimodal(const SynthConfig& cfg, uint64_t seed) {
    if (cfg.n < 16) throw std::invalid_argument("synth: series length too small");
    if (cfg.channels < 1) throw std::invalid_argument("synth: need at least one channel");
    if (cfg.anomaly_ratio < 0.0 || cfg.anomaly_ratio > 0.5)
        throw std::invalid_argument("synth: anomaly ratio outside [0, 0.5]");
    for (const auto& k : cfg.kinds)
        if (k != "spike" && k != "level_shift" && k != "freq_shift")
            throw std::invalid_argument("synth: unknown anomaly kind '" + k + "'");

    SynthData out;
    out.series.channels = cfg.channels;
    out.series.timestamps.reserve(static_cast<size_t>(cfg.n));
    for (int64_t t = 0; t < cfg.n; ++t) out.series.timestamps.push_back(cfg.ts_start + t * cfg.ts_step);

    // Base signal plus noise, kept separate so frequency warps replace only the base.
    auto noise_rng = make_rng(seed, 1);
    std::vector<double> noise(static_cast<size_t>(cfg.n * cfg.channels));
    for (double& x : noise) x = cfg.noise_sigma * gaussian(noise_rng);

    // Event placement: fill the anomaly budget with non-overlapping spans.
    auto ev_rng = make_rng(seed, 2);
    int64_t target = std::llround(cfg.anomaly_ratio * static_cast<double>(cfg.n));
    std::vector<uint8_t> occupied(static_cast<size_t>(cfg.n), 0);
    const int64_t margin = 8, gap = 8;
    int64_t placed = 0;
    int attempts = 0;
    while (placed < target && attempts < 20000 && !cfg.kinds.empty()) {
        ++attempts;
        const std::string& kind = cfg.kinds[static_cast<size_t>(uniform_int(ev_rng, 0, static_cast<int64_t>(cfg.kinds.size()) - 1))];
        int64_t len;
        if (kind == "spike")
            len = uniform_int(ev_rng, 1, 3);
        else if (kind == "level_shift")
            len = uniform_int(ev_rng, 10, 30);
        else
            len = uniform_int(ev_rng, 20, 40);
        if (cfg.n - len - 2 * margin <= 0) continue;
        int64_t start = uniform_int(ev_rng, margin, cfg.n - len - margin);
        bool clash = false;
        for (int64_t t = std::max<int64_t>(0, start - gap); t < std::min(cfg.n, start + len + gap); ++t)
            if (occupied[static_cast<size_t>(t)]) {
                clash = true;
                break;
            }
        if (clash) continue;
        AnomalyEvent ev;
        ev.kind = kind;
        ev.start_index = start;
        ev.end_index = start + len;
        ev.start_ts = out.series.timestamps[static_cast<size_t>(start)];
        ev.end_ts = out.series.timestamps[static_cast<size_t>(start + len - 1)];
        ev.channel = cfg.channels == 1 ? 0 : uniform_int(ev_rng, 0, cfg.channels - 1);
        for (int64_t t = start; t < start + len; ++t) occupied[static_cast<size_t>(t)] = 1;
        placed += len;
        out.events.push_back(std::move(ev));
    }
    std::sort(out.events.begin(), out.events.end(),
              [](const AnomalyEvent& a, const AnomalyEvent& b) { return a.start_index < b.start_index; });

    // Assemble values.
    out.series.values.assign(static_cast<size_t>(cfg.n * cfg.channels), 0.0);
    out.series.labels.assign(static_cast<size_t>(cfg.n), 0);
    for (int64_t t = 0; t < cfg.n; ++t)
        for (int64_t c = 0; c < cfg.channels; ++c)
            out.series.values[static_cast<size_t>(t * cfg.channels + c)] =
                base_signal(static_cast<double>(t), 1.0, c) + noise[static_cast<size_t>(t * cfg.channels + c)];

    for (const AnomalyEvent& ev : out.events) {
        for (int64_t t = ev.start_index; t < ev.end_index; ++t) {
            out.series.labels[static_cast<size_t>(t)] = 1;
            size_t at = static_cast<size_t>(t * cfg.channels + ev.channel);
            if (ev.kind == "spike") {
                out.series.values[at] += 5.0 * cfg.noise_sigma;
            } else if (ev.kind == "level_shift") {
                out.series.values[at] += 3.0 * cfg.noise_sigma;
            } else {  // freq_shift: same amplitude envelope, warped phase velocity
                out.series.values[at] = base_signal(static_cast<double>(t), 2.2, ev.channel) +
                                        noise[at];
            }
        }
    }

    // Text: one informative doc per event, plus unrelated distractors.
    for (const AnomalyEvent& ev : out.events) {
        TextDoc d;
        d.start = ev.start_ts - cfg.ts_step;
        d.end = ev.end_ts + cfg.ts_step;
        d.text = ev.kind == "spike" ? kSpikeText : (ev.kind == "level_shift" ? kLevelText : kFreqText);
        out.docs.push_back(std::move(d));
    }
    auto text_rng = make_rng(seed, 3);
    int64_t n_distract = std::llround(cfg.distractor_rate * static_cast<double>(out.events.size()));
    constexpr int64_t kPool = static_cast<int64_t>(sizeof(kDistractorPool) / sizeof(kDistractorPool[0]));
    for (int64_t i = 0; i < n_distract; ++i) {
        int64_t start = uniform_int(text_rng, 0, cfg.n - 2);
        int64_t len = uniform_int(text_rng, 5, 40);
        int64_t end = std::min(cfg.n - 1, start + len);
        TextDoc d;
        d.start = out.series.timestamps[static_cast<size_t>(start)];
        d.end = out.series.timestamps[static_cast<size_t>(end)];
        d.text = kDistractorPool[uniform_int(text_rng, 0, kPool - 1)];
        out.docs.push_back(std::move(d));
    }
    std::stable_sort(out.docs.begin(), out.docs.end(), [](const TextDoc& a, const TextDoc& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.text < b.text;
    });
    return out;
}

}  // namespace ttad
