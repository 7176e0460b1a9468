#ifndef KAN_METRICS_HPP
#define KAN_METRICS_HPP

#include "kan/dataset.hpp"
#include "kan/network.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace kan {

// Binary confusion counts with the derived metrics, all computed from the
// viewpoint of the malicious class. Percentages are within true class
// (tn+fp over normals, fn+tp over attacks). Ratios with a zero denominator
// are reported as 0 and flagged.
struct EvalReport {
    std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    double tn_pct = 0.0, fp_pct = 0.0, fn_pct = 0.0, tp_pct = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double balanced_accuracy = 0.0;
    double accuracy = 0.0;
    bool degenerate = false; // some denominator was zero

    std::int64_t total() const { return tn + fp + fn + tp; }
};

EvalReport report_from_counts(std::int64_t tn, std::int64_t fp, std::int64_t fn,
                              std::int64_t tp);

// Standardizes each sample with the model's embedded standardizer, applies
// the logit decision rule, and tallies the confusion counts.
EvalReport evaluate(const KanNetwork& net, const TelemetryDataset& ds);
EvalReport evaluate_subset(const KanNetwork& net, const TelemetryDataset& ds,
                           std::span<const std::size_t> indices);

int classify_sample(const KanNetwork& net, const LabeledSample& s);

// Human-readable block in the reporting style used throughout: class-wise
// percentages at 1 decimal, metrics at 2 decimals.
std::string format_report_text(const EvalReport& r);

// Machine-readable JSON with both presentation-rounded and full-precision
// fields.
std::string format_report_json(const EvalReport& r);

} // namespace kan

#endif
