#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ttad {

// Aligned multivariate series; values are row-major T x D.
struct SeriesDataset {
    std::vector<int64_t> timestamps;
    std::vector<double> values;
    std::vector<uint8_t> labels;  // empty when the file carries no label column
    int64_t channels = 0;

    int64_t length() const { return static_cast<int64_t>(timestamps.size()); }
    bool has_labels() const { return !labels.empty(); }
    double value(int64_t t, int64_t c) const { return values[static_cast<size_t>(t * channels + c)]; }
    SeriesDataset slice(int64_t from, int64_t to) const;
};

struct TextDoc {
    int64_t start = 0;
    int64_t end = 0;
    std::string text;
    std::vector<double> embedding;  // optional precomputed vector

    bool has_embedding() const { return !embedding.empty(); }
};

// Window geometry shared by training and scoring.
struct WindowSpec {
    int64_t window = 96;
    int64_t stride = 96;
    int64_t patch = 6;
    int64_t patch_stride = 6;
    double mask_ratio = 0.5;

    int64_t patches_per_window() const { return (window - patch) / patch_stride + 1; }
    void validate() const;
};

struct AnomalyEvent {
    std::string kind;  // spike | level_shift | freq_shift
    int64_t start_index = 0;
    int64_t end_index = 0;  // exclusive
    int64_t start_ts = 0;
    int64_t end_ts = 0;
    int64_t channel = 0;
};

struct SynthConfig {
    int64_t n = 4000;
    int64_t channels = 1;
    double anomaly_ratio = 0.05;
    std::vector<std::string> kinds = {"spike", "level_shift", "freq_shift"};
    double distractor_rate = 1.0;
    double noise_sigma = 0.1;
    int64_t ts_start = 1700000000;
    int64_t ts_step = 60;
};

struct SynthData {
    SeriesDataset series;
    std::vector<TextDoc> docs;
    std::vector<AnomalyEvent> events;
};

// CSV with header `timestamp,<value columns...>[,label]`. Rows may arrive
// shuffled (sorted with a warning); duplicate timestamps are an error.
SeriesDataset load_series(const std::string& path, std::vector<std::string>* warnings = nullptr);
void save_series(const std::string& path, const SeriesDataset& ds);

// JSONL docs {start, end, text?, embedding?}; when expect_dim > 0 any present
// embedding must have exactly that length. Result is sorted by (start, end, text).
std::vector<TextDoc> load_text(const std::string& path, int64_t expect_dim = 0);
void save_text(const std::string& path, const std::vector<TextDoc>& docs);

std::vector<AnomalyEvent> load_events(const std::string& path);
void save_events(const std::string& path, const std::vector<AnomalyEvent>& events, uint64_t seed);

// Window start offsets 0, s, 2s, ...; count floor((T - w) / s) + 1.
std::vector<int64_t> make_windows(int64_t series_len, int64_t window, int64_t stride);

// Indices of docs whose [start, end] intersects the window's timestamp range
// [ts[first], ts[last]], in the docs' stored order.
std::vector<int64_t> docs_for_window(const std::vector<TextDoc>& docs, const SeriesDataset& ds,
                                     int64_t win_start, int64_t window);

SynthData synth_multimodal(const SynthConfig& cfg, uint64_t seed);

}  // namespace ttad
