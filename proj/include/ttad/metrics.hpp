#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ttad {

// Half-open [start, end) index interval of consecutive anomalous points.
struct EventInterval {
    int64_t start = 0;
    int64_t end = 0;
    int64_t length() const { return end - start; }
};

std::vector<EventInterval> events_from_labels(const std::vector<uint8_t>& labels);

struct PointMetrics {
    std::optional<double> accuracy, precision, recall, f1;
};
PointMetrics point_metrics(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);

struct RangeMetrics {
    std::optional<double> precision, recall, f1;
};
// Tatbul-style range metrics with flat positional bias and reciprocal
// cardinality; alpha weights the existence reward on the recall side.
RangeMetrics range_metrics(const std::vector<EventInterval>& pred, const std::vector<EventInterval>& truth,
                           double alpha = 0.0);

struct AffiliationMetrics {
    std::optional<double> precision, recall, f1;
};
// Zone-local distance probabilities against a uniform-random predictor.
// Predictions are integer points; truth events are continuous [start, end).
AffiliationMetrics affiliation_metrics(const std::vector<int64_t>& pred_points,
                                       const std::vector<EventInterval>& truth, int64_t series_len);

// Weighted ROC AUC (Mann-Whitney, ties count half) and PR AUC (step-wise
// interpolation over descending unique thresholds). Weights are per-point
// positive/negative masses; binary labels use weights {0,1}.
std::optional<double> auc_roc_weighted(const std::vector<double>& scores, const std::vector<double>& wpos,
                                       const std::vector<double>& wneg);
std::optional<double> auc_pr_weighted(const std::vector<double>& scores, const std::vector<double>& wpos,
                                      const std::vector<double>& wneg);
std::optional<double> auc_roc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);
std::optional<double> auc_pr(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Linear ramp relabeling: 1 inside events, decaying to 0 across a buffer of
// width ell on both sides (ell == 0 reproduces the binary labels).
std::vector<double> ramp_labels(const std::vector<EventInterval>& truth, int64_t series_len, double ell);

struct VusOptions {
    int grid_points = 16;   // evenly spaced buffers from 0 to lmax
    double lmax = 0.0;      // 0: auto = max(4, 2 * median event length)
    double l0 = 0.0;        // 0: auto = max(2, median event length); used by the single-buffer metrics
    std::vector<double> grid;  // explicit grid overrides grid_points/lmax
};

struct VusMetrics {
    std::optional<double> range_auc_roc, range_auc_pr;  // at the single default buffer
    std::optional<double> vus_roc, vus_pr;              // trapezoid average across the grid
};
VusMetrics vus_metrics(const std::vector<double>& scores, const std::vector<EventInterval>& truth,
                       int64_t series_len, const VusOptions& opt = {});

struct MetricReport {
    std::optional<double> accuracy, precision, recall, f1;
    std::optional<double> range_precision, range_recall, range_f1;
    std::optional<double> affiliation_precision, affiliation_recall, affiliation_f1;
    std::optional<double> auc_roc, auc_pr;
    std::optional<double> range_auc_roc, range_auc_pr;
    std::optional<double> vus_roc, vus_pr;

    std::string to_json(int indent = 2) const;
};

struct EvalOptions {
    double threshold_ratio = 0.05;
    double range_alpha = 0.0;
    VusOptions vus;
};

// Full battery over continuous scores plus binary predictions and truth.
MetricReport compute_metrics(const std::vector<double>& scores, const std::vector<uint8_t>& pred,
                             const std::vector<uint8_t>& truth, const EvalOptions& opt = {});

}  // namespace ttad
