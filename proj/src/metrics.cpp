#include "ttad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace ttad {

namespace {

void check_events(const std::vector<EventInterval>& events, int64_t series_len, const char* what) {
    int64_t prev_end = 0;
    bool first = true;
    for (const auto& ev : events) {
        if (ev.start < 0 || ev.end > series_len || ev.start >= ev.end)
            throw std::invalid_argument(std::string(what) + ": event outside series or empty");
        if (!first && ev.start < prev_end)
            throw std::invalid_argument(std::string(what) + ": events overlap or are unsorted");
        prev_end = ev.end;
        first = false;
    }
}

std::optional<double> harmonic(const std::optional<double>& p, const std::optional<double>& r) {
    if (!p || !r) return std::nullopt;
    if (*p + *r <= 0.0) return 0.0;
    return 2.0 * *p * *r / (*p + *r);
}

int64_t overlap_len(const EventInterval& a, const EventInterval& b) {
    return std::max<int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

// Distance from integer point t to the nearest anomalous point of each event,
// two linear sweeps. Non-anomalous points always have distance >= 1.
std::vector<int64_t> dist_to_truth(const std::vector<EventInterval>& truth, int64_t series_len) {
    const int64_t inf = series_len + 1;
    std::vector<int64_t> d(static_cast<size_t>(series_len), inf);
    for (const auto& ev : truth)
        for (int64_t t = ev.start; t < ev.end; ++t) d[static_cast<size_t>(t)] = 0;
    for (int64_t t = 1; t < series_len; ++t)
        d[static_cast<size_t>(t)] = std::min(d[static_cast<size_t>(t)], d[static_cast<size_t>(t - 1)] + 1);
    for (int64_t t = series_len - 2; t >= 0; --t)
        d[static_cast<size_t>(t)] = std::min(d[static_cast<size_t>(t)], d[static_cast<size_t>(t + 1)] + 1);
    return d;
}

struct ScoreGroup {
    double wpos = 0.0;
    double wneg = 0.0;
};

// Ties collapsed into groups, ascending score order.
std::vector<ScoreGroup> tie_groups_ascending(const std::vector<double>& scores, const std::vector<double>& wpos,
                                             const std::vector<double>& wneg) {
    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    std::vector<ScoreGroup> groups;
    for (size_t k = 0; k < order.size(); ++k) {
        if (k == 0 || scores[order[k]] != scores[order[k - 1]]) groups.push_back({});
        groups.back().wpos += wpos[order[k]];
        groups.back().wneg += wneg[order[k]];
    }
    return groups;
}

double median_event_length(const std::vector<EventInterval>& truth) {
    std::vector<int64_t> lens;
    lens.reserve(truth.size());
    for (const auto& ev : truth) lens.push_back(ev.length());
    std::sort(lens.begin(), lens.end());
    const size_t n = lens.size();
    if (n % 2 == 1) return static_cast<double>(lens[n / 2]);
    return 0.5 * static_cast<double>(lens[n / 2 - 1] + lens[n / 2]);
}

void push_json(nlohmann::ordered_json& j, const char* key, const std::optional<double>& v) {
    if (v)
        j[key] = *v;
    else
        j[key] = nullptr;
}

}  // namespace

std::vector<EventInterval> events_from_labels(const std::vector<uint8_t>& labels) {
    std::vector<EventInterval> out;
    const int64_t n = static_cast<int64_t>(labels.size());
    int64_t t = 0;
    while (t < n) {
        if (labels[static_cast<size_t>(t)]) {
            int64_t s = t;
            while (t < n && labels[static_cast<size_t>(t)]) ++t;
            out.push_back({s, t});
        } else {
            ++t;
        }
    }
    return out;
}

PointMetrics point_metrics(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("point_metrics: length mismatch");
    int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i])
            ++tp;
        else if (pred[i] && !truth[i])
            ++fp;
        else if (!pred[i] && truth[i])
            ++fn;
        else
            ++tn;
    }
    PointMetrics m;
    if (!pred.empty()) m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(pred.size());
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = harmonic(m.precision, m.recall);
    return m;
}

RangeMetrics range_metrics(const std::vector<EventInterval>& pred, const std::vector<EventInterval>& truth,
                           double alpha) {
    RangeMetrics m;
    // Flat positional bias reduces the overlap reward to a length fraction;
    // reciprocal cardinality splits credit across fragmented counterparts.
    auto side = [](const std::vector<EventInterval>& own, const std::vector<EventInterval>& other,
                   double existence_weight) -> std::optional<double> {
        if (own.empty()) return std::nullopt;
        double total = 0.0;
        for (const auto& r : own) {
            int64_t covered = 0;
            int64_t hits = 0;
            for (const auto& o : other) {
                int64_t ov = overlap_len(r, o);
                if (ov > 0) {
                    covered += ov;
                    ++hits;
                }
            }
            double score = 0.0;
            if (hits > 0) {
                double overlap_reward =
                    (1.0 / static_cast<double>(hits)) * static_cast<double>(covered) / static_cast<double>(r.length());
                score = existence_weight * 1.0 + (1.0 - existence_weight) * overlap_reward;
            }
            total += score;
        }
        return total / static_cast<double>(own.size());
    };
    m.recall = side(truth, pred, alpha);
    m.precision = side(pred, truth, 0.0);
    m.f1 = harmonic(m.precision, m.recall);
    return m;
}

AffiliationMetrics affiliation_metrics(const std::vector<int64_t>& pred_points,
                                       const std::vector<EventInterval>& truth, int64_t series_len) {
    check_events(truth, series_len, "affiliation_metrics");
    for (size_t i = 0; i < pred_points.size(); ++i) {
        if (pred_points[i] < 0 || pred_points[i] >= series_len)
            throw std::invalid_argument("affiliation_metrics: prediction outside series");
        if (i > 0 && pred_points[i] <= pred_points[i - 1])
            throw std::invalid_argument("affiliation_metrics: predictions must be strictly increasing");
    }
    AffiliationMetrics m;
    if (truth.empty() || series_len <= 0) return m;

    // Zones partition [0, len); interior boundaries sit at gap midpoints.
    const size_t nz = truth.size();
    std::vector<double> bounds(nz + 1);
    bounds[0] = 0.0;
    for (size_t k = 1; k < nz; ++k) bounds[k] = 0.5 * static_cast<double>(truth[k - 1].end + truth[k].start);
    bounds[nz] = static_cast<double>(series_len);

    // Distance conventions on continuous intervals: d(x, [s,e)) and, for the
    // recall side, survival of |y - U| under U uniform on the zone.
    double precision_sum = 0.0;
    size_t precision_zones = 0;
    double recall_sum = 0.0;

    size_t pi = 0;
    for (size_t k = 0; k < nz; ++k) {
        const double zl = bounds[k];
        const double zr = bounds[k + 1];
        const double zw = zr - zl;
        const double s = static_cast<double>(truth[k].start);
        const double e = static_cast<double>(truth[k].end);

        std::vector<double> pts;
        while (pi < pred_points.size() && static_cast<double>(pred_points[pi]) < zr) {
            pts.push_back(static_cast<double>(pred_points[pi]));
            ++pi;
        }

        if (!pts.empty()) {
            // Per-point survival P(d(U, I) >= d(p, I)), averaged within the zone.
            double acc = 0.0;
            for (double p : pts) {
                double dp = std::max({0.0, s - p, p - e});
                if (dp <= 0.0) {
                    acc += 1.0;
                } else {
                    double far_left = std::max(0.0, (s - dp) - zl);
                    double far_right = std::max(0.0, zr - (e + dp));
                    acc += (far_left + far_right) / zw;
                }
            }
            precision_sum += acc / static_cast<double>(pts.size());
            ++precision_zones;

            // Recall integrand S(y) = P(|y - U| >= d(y, preds)) where each
            // predicted instant p attests the unit interval [p, p+1). S is
            // piecewise linear in y; breakpoints are event ends, prediction
            // interval edges, midpoints between neighbouring prediction
            // intervals, and reflections about the zone edges. Trapezoids are
            // exact per piece.
            std::vector<double> cuts{s, e};
            for (size_t i = 0; i < pts.size(); ++i) {
                cuts.push_back(pts[i]);
                cuts.push_back(pts[i] + 1.0);
                if (i + 1 < pts.size()) cuts.push_back(0.5 * (pts[i] + 1.0 + pts[i + 1]));
                cuts.push_back(0.5 * (pts[i] + zl));
                cuts.push_back(0.5 * (pts[i] + 1.0 + zr));
            }
            std::sort(cuts.begin(), cuts.end());
            auto survival = [&](double y) {
                double delta = zw * 2.0;
                for (double p : pts) delta = std::min(delta, std::max({0.0, p - y, y - (p + 1.0)}));
                double far_left = std::max(0.0, (y - delta) - zl);
                double far_right = std::max(0.0, zr - (y + delta));
                return (far_left + far_right) / zw;
            };
            double integral = 0.0;
            for (size_t i = 0; i + 1 < cuts.size(); ++i) {
                double a = std::max(cuts[i], s);
                double b = std::min(cuts[i + 1], e);
                if (b <= a) continue;
                integral += 0.5 * (survival(a) + survival(b)) * (b - a);
            }
            recall_sum += integral / (e - s);
        }
        // Events whose zone holds no prediction contribute zero recall.
    }

    if (precision_zones > 0) m.precision = precision_sum / static_cast<double>(precision_zones);
    m.recall = recall_sum / static_cast<double>(nz);
    m.f1 = harmonic(m.precision, m.recall);
    return m;
}

std::optional<double> auc_roc_weighted(const std::vector<double>& scores, const std::vector<double>& wpos,
                                       const std::vector<double>& wneg) {
    if (scores.size() != wpos.size() || scores.size() != wneg.size())
        throw std::invalid_argument("auc_roc_weighted: length mismatch");
    double wp = 0.0, wn = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        wp += wpos[i];
        wn += wneg[i];
    }
    if (wp <= 0.0 || wn <= 0.0) return std::nullopt;
    double acc = 0.0;
    double cum_neg = 0.0;
    for (const auto& g : tie_groups_ascending(scores, wpos, wneg)) {
        acc += g.wpos * (cum_neg + 0.5 * g.wneg);
        cum_neg += g.wneg;
    }
    return acc / (wp * wn);
}

std::optional<double> auc_pr_weighted(const std::vector<double>& scores, const std::vector<double>& wpos,
                                      const std::vector<double>& wneg) {
    if (scores.size() != wpos.size() || scores.size() != wneg.size())
        throw std::invalid_argument("auc_pr_weighted: length mismatch");
    double wp = 0.0;
    for (double w : wpos) wp += w;
    if (wp <= 0.0) return std::nullopt;
    auto groups = tie_groups_ascending(scores, wpos, wneg);
    double ap = 0.0;
    double cum_tp = 0.0, cum_all = 0.0, recall_prev = 0.0;
    for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
        cum_tp += it->wpos;
        cum_all += it->wpos + it->wneg;
        double precision = cum_tp / cum_all;
        double recall = cum_tp / wp;
        ap += (recall - recall_prev) * precision;
        recall_prev = recall;
    }
    return ap;
}

std::optional<double> auc_roc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_roc: length mismatch");
    std::vector<double> wpos(scores.size()), wneg(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        wpos[i] = labels[i] ? 1.0 : 0.0;
        wneg[i] = 1.0 - wpos[i];
    }
    return auc_roc_weighted(scores, wpos, wneg);
}

std::optional<double> auc_pr(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc_pr: length mismatch");
    std::vector<double> wpos(scores.size()), wneg(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        wpos[i] = labels[i] ? 1.0 : 0.0;
        wneg[i] = 1.0 - wpos[i];
    }
    return auc_pr_weighted(scores, wpos, wneg);
}

std::vector<double> ramp_labels(const std::vector<EventInterval>& truth, int64_t series_len, double ell) {
    check_events(truth, series_len, "ramp_labels");
    if (ell < 0.0 || !std::isfinite(ell)) throw std::invalid_argument("ramp_labels: buffer must be finite and >= 0");
    auto d = dist_to_truth(truth, series_len);
    std::vector<double> out(static_cast<size_t>(series_len), 0.0);
    for (size_t t = 0; t < out.size(); ++t) {
        if (d[t] == 0)
            out[t] = 1.0;
        else if (ell > 0.0)
            out[t] = std::max(0.0, 1.0 - static_cast<double>(d[t]) / ell);
    }
    return out;
}

VusMetrics vus_metrics(const std::vector<double>& scores, const std::vector<EventInterval>& truth,
                       int64_t series_len, const VusOptions& opt) {
    if (static_cast<int64_t>(scores.size()) != series_len)
        throw std::invalid_argument("vus_metrics: scores length mismatch");
    check_events(truth, series_len, "vus_metrics");
    VusMetrics m;
    if (truth.empty()) return m;

    const double med = median_event_length(truth);
    const double lmax = opt.lmax > 0.0 ? opt.lmax : std::max(4.0, 2.0 * med);
    const double l0 = opt.l0 > 0.0 ? opt.l0 : std::max(2.0, med);

    std::vector<double> grid = opt.grid;
    if (grid.empty()) {
        if (opt.grid_points < 1) throw std::invalid_argument("vus_metrics: grid_points must be >= 1");
        if (opt.grid_points == 1) {
            grid.push_back(lmax);
        } else {
            for (int j = 0; j < opt.grid_points; ++j)
                grid.push_back(lmax * static_cast<double>(j) / static_cast<double>(opt.grid_points - 1));
        }
    }
    for (size_t j = 1; j < grid.size(); ++j)
        if (grid[j] <= grid[j - 1]) throw std::invalid_argument("vus_metrics: grid must be strictly increasing");

    auto eval_at = [&](double ell) {
        auto w = ramp_labels(truth, series_len, ell);
        std::vector<double> wneg(w.size());
        for (size_t i = 0; i < w.size(); ++i) wneg[i] = 1.0 - w[i];
        return std::make_pair(auc_roc_weighted(scores, w, wneg), auc_pr_weighted(scores, w, wneg));
    };

    auto [r0, p0] = eval_at(l0);
    m.range_auc_roc = r0;
    m.range_auc_pr = p0;

    std::vector<std::optional<double>> rocs, prs;
    for (double ell : grid) {
        auto [r, p] = eval_at(ell);
        rocs.push_back(r);
        prs.push_back(p);
    }
    auto average = [&](const std::vector<std::optional<double>>& vals) -> std::optional<double> {
        for (const auto& v : vals)
            if (!v) return std::nullopt;
        if (vals.size() == 1) return *vals[0];
        double span = grid.back() - grid.front();
        if (span <= 0.0) return *vals[0];
        double acc = 0.0;
        for (size_t j = 0; j + 1 < vals.size(); ++j)
            acc += 0.5 * (*vals[j] + *vals[j + 1]) * (grid[j + 1] - grid[j]);
        return acc / span;
    };
    m.vus_roc = average(rocs);
    m.vus_pr = average(prs);
    return m;
}

std::string MetricReport::to_json(int indent) const {
    nlohmann::ordered_json j;
    push_json(j, "accuracy", accuracy);
    push_json(j, "precision", precision);
    push_json(j, "recall", recall);
    push_json(j, "f1", f1);
    push_json(j, "range_precision", range_precision);
    push_json(j, "range_recall", range_recall);
    push_json(j, "range_f1", range_f1);
    push_json(j, "affiliation_precision", affiliation_precision);
    push_json(j, "affiliation_recall", affiliation_recall);
    push_json(j, "affiliation_f1", affiliation_f1);
    push_json(j, "auc_roc", auc_roc);
    push_json(j, "auc_pr", auc_pr);
    push_json(j, "range_auc_roc", range_auc_roc);
    push_json(j, "range_auc_pr", range_auc_pr);
    push_json(j, "vus_roc", vus_roc);
    push_json(j, "vus_pr", vus_pr);
    return j.dump(indent);
}

MetricReport compute_metrics(const std::vector<double>& scores, const std::vector<uint8_t>& pred,
                             const std::vector<uint8_t>& truth, const EvalOptions& opt) {
    if (scores.size() != pred.size() || scores.size() != truth.size())
        throw std::invalid_argument("compute_metrics: length mismatch");
    MetricReport r;
    auto pm = point_metrics(pred, truth);
    r.accuracy = pm.accuracy;
    r.precision = pm.precision;
    r.recall = pm.recall;
    r.f1 = pm.f1;

    auto truth_events = events_from_labels(truth);
    auto pred_events = events_from_labels(pred);
    auto rm = range_metrics(pred_events, truth_events, opt.range_alpha);
    r.range_precision = rm.precision;
    r.range_recall = rm.recall;
    r.range_f1 = rm.f1;

    std::vector<int64_t> pred_points;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i]) pred_points.push_back(static_cast<int64_t>(i));
    auto am = affiliation_metrics(pred_points, truth_events, static_cast<int64_t>(scores.size()));
    r.affiliation_precision = am.precision;
    r.affiliation_recall = am.recall;
    r.affiliation_f1 = am.f1;

    r.auc_roc = auc_roc(scores, truth);
    r.auc_pr = auc_pr(scores, truth);

    auto vm = vus_metrics(scores, truth_events, static_cast<int64_t>(scores.size()), opt.vus);
    r.range_auc_roc = vm.range_auc_roc;
    r.range_auc_pr = vm.range_auc_pr;
    r.vus_roc = vm.vus_roc;
    r.vus_pr = vm.vus_pr;
    return r;
}

}  // namespace ttad
