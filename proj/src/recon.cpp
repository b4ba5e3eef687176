#include "ttad/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ttad/common.hpp"

namespace ttad {

ReconParams ReconParams::init(int64_t d_model, int heads, int64_t ffn_hidden, int64_t patch_len,
                              std::mt19937_64& rng) {
    ReconParams p;
    p.self_attn = AttentionParams::init(d_model, heads, rng);
    p.cross = AttentionParams::init(d_model, heads, rng);
    p.ffn = FeedForwardParams::init(d_model, ffn_hidden, rng);
    p.proj = Linear::init(d_model, patch_len, rng);
    return p;
}

void ReconParams::collect(const std::string& prefix, NamedParams& out) const {
    self_attn.collect(prefix + ".self_attn", out);
    cross.collect(prefix + ".cross", out);
    ffn.collect(prefix + ".ffn", out);
    proj.collect(prefix + ".proj", out);
}

Tensor reconstruct(const ReconParams& params, const Tensor& h_time_masked, const Tensor& z_con) {
    Tensor z_ref = params.self_attn.apply(z_con, z_con, z_con);
    Tensor u = params.ffn.apply(h_time_masked + params.cross.apply(h_time_masked, z_ref, z_ref));
    return params.proj.apply(u);
}

Tensor loss_rec(const Tensor& target_rows, const Tensor& recon_rows, bool sum_mode) {
    if (target_rows.shape() != recon_rows.shape()) throw std::invalid_argument("loss_rec: shape mismatch");
    Tensor d = target_rows - recon_rows;
    Tensor sq = sum(d * d);
    return sum_mode ? sq : sq * (1.0 / static_cast<double>(target_rows.size()));
}

void ScoreAccumulator::add_window(int64_t start, const std::vector<double>& per_timestamp_err) {
    if (start < 0 || start + static_cast<int64_t>(per_timestamp_err.size()) > static_cast<int64_t>(sum_.size()))
        throw std::invalid_argument("score accumulator: window out of range");
    for (size_t i = 0; i < per_timestamp_err.size(); ++i) {
        sum_[static_cast<size_t>(start) + i] += per_timestamp_err[i];
        ++count_[static_cast<size_t>(start) + i];
    }
}

std::vector<double> ScoreAccumulator::finalize() const {
    std::vector<double> out(sum_.size());
    for (size_t i = 0; i < sum_.size(); ++i) {
        if (count_[i] == 0)
            throw std::runtime_error("scoring left timestamp index " + std::to_string(i) +
                                     " uncovered; stride does not tile the series");
        out[i] = sum_[i] / static_cast<double>(count_[i]);
    }
    return out;
}

std::vector<uint8_t> threshold_labels(const std::vector<double>& scores, double ratio) {
    if (ratio <= 0.0 || ratio > 1.0) throw std::invalid_argument("threshold_labels: ratio outside (0,1]");
    int64_t t = static_cast<int64_t>(scores.size());
    int64_t k = static_cast<int64_t>(std::ceil(ratio * static_cast<double>(t)));
    std::vector<int64_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;  // earlier timestamp wins the tie
    });
    std::vector<uint8_t> flags(scores.size(), 0);
    for (int64_t i = 0; i < std::min(k, t); ++i) flags[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
    return flags;
}

void write_scores_csv(const std::string& path, const ScoreSeries& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scores csv: " + path);
    out << (s.has_labels() ? "timestamp,score,label\n" : "timestamp,score\n");
    for (size_t i = 0; i < s.timestamps.size(); ++i) {
        out << s.timestamps[i] << "," << format_roundtrip(s.scores[i]);
        if (s.has_labels()) out << "," << static_cast<int>(s.labels[i]);
        out << "\n";
    }
}

ScoreSeries read_scores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scores csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("parse error in " + path + " at row 1: empty file");
    if (line.size() && line.back() == '\r') line.pop_back();
    bool has_label;
    if (line == "timestamp,score")
        has_label = false;
    else if (line == "timestamp,score,label")
        has_label = true;
    else
        throw std::runtime_error("parse error in " + path + " at row 1: unexpected header '" + line + "'");

    ScoreSeries s;
    int64_t rowno = 1;
    while (std::getline(in, line)) {
        ++rowno;
        if (line.empty()) continue;
        if (line.back() == '\r') line.pop_back();
        size_t c1 = line.find(',');
        size_t c2 = has_label ? line.find(',', c1 + 1) : std::string::npos;
        if (c1 == std::string::npos || (has_label && c2 == std::string::npos))
            throw std::runtime_error("parse error in " + path + " at row " + std::to_string(rowno) +
                                     ": wrong field count");
        int64_t ts;
        double val;
        std::string f0 = line.substr(0, c1);
        std::string f1 = has_label ? line.substr(c1 + 1, c2 - c1 - 1) : line.substr(c1 + 1);
        auto r0 = std::from_chars(f0.data(), f0.data() + f0.size(), ts);
        auto r1 = std::from_chars(f1.data(), f1.data() + f1.size(), val);
        if (r0.ec != std::errc() || r0.ptr != f0.data() + f0.size() || r1.ec != std::errc() ||
            r1.ptr != f1.data() + f1.size() || !std::isfinite(val))
            throw std::runtime_error("parse error in " + path + " at row " + std::to_string(rowno) +
                                     ": bad numeric field");
        s.timestamps.push_back(ts);
        s.scores.push_back(val);
        if (has_label) {
            std::string f2 = line.substr(c2 + 1);
            if (f2 == "0")
                s.labels.push_back(0);
            else if (f2 == "1")
                s.labels.push_back(1);
            else
                throw std::runtime_error("parse error in " + path + " at row " + std::to_string(rowno) +
                                         ": label must be 0 or 1");
        }
    }
    return s;
}

}  // namespace ttad
