#include "kan/metrics.hpp"

#include "kan/errors.hpp"

#include "json.hpp"

#include <cstdio>

namespace kan {

namespace {

double safe_ratio(std::int64_t num, std::int64_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

} // namespace

EvalReport report_from_counts(std::int64_t tn, std::int64_t fp, std::int64_t fn,
                              std::int64_t tp) {
    EvalReport r;
    r.tn = tn;
    r.fp = fp;
    r.fn = fn;
    r.tp = tp;

    bool deg = false;
    const std::int64_t normals = tn + fp;
    const std::int64_t attacks = fn + tp;
    r.tn_pct = 100.0 * safe_ratio(tn, normals, deg);
    r.fp_pct = 100.0 * safe_ratio(fp, normals, deg);
    r.fn_pct = 100.0 * safe_ratio(fn, attacks, deg);
    r.tp_pct = 100.0 * safe_ratio(tp, attacks, deg);

    r.precision = safe_ratio(tp, tp + fp, deg);
    r.recall = safe_ratio(tp, tp + fn, deg);
    if (r.precision + r.recall > 0.0) {
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    } else {
        r.f1 = 0.0;
        deg = true;
    }
    double tnr = safe_ratio(tn, normals, deg);
    r.balanced_accuracy = 0.5 * (tnr + r.recall);
    r.accuracy = safe_ratio(tn + tp, r.total(), deg);
    r.degenerate = deg;
    return r;
}

int classify_sample(const KanNetwork& net, const LabeledSample& s) {
    if (!net.meta.standardizer)
        throw ModelError("classify_sample: model carries no standardizer");
    auto feats = s.features();
    std::array<double, kFeatureCount> u;
    net.meta.standardizer->transform(feats, u);
    return classify(net, u);
}

EvalReport evaluate(const KanNetwork& net, const TelemetryDataset& ds) {
    if (ds.samples.empty()) throw DataError("evaluate: empty dataset");
    std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    for (const auto& s : ds.samples) {
        int predicted = classify_sample(net, s);
        if (s.label == 0) {
            (predicted == 0 ? tn : fp)++;
        } else {
            (predicted == 1 ? tp : fn)++;
        }
    }
    return report_from_counts(tn, fp, fn, tp);
}

EvalReport evaluate_subset(const KanNetwork& net, const TelemetryDataset& ds,
                           std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("evaluate_subset: empty index set");
    std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    for (std::size_t idx : indices) {
        const LabeledSample& s = ds.samples.at(idx);
        int predicted = classify_sample(net, s);
        if (s.label == 0) {
            (predicted == 0 ? tn : fp)++;
        } else {
            (predicted == 1 ? tp : fn)++;
        }
    }
    return report_from_counts(tn, fp, fn, tp);
}

std::string format_report_text(const EvalReport& r) {
    std::string out;
    out += "confusion (rows = true class, % within class):\n";
    out += "  normal : tn=" + fixed(r.tn_pct, 1) + "%  fp=" + fixed(r.fp_pct, 1) + "%\n";
    out += "  attack : fn=" + fixed(r.fn_pct, 1) + "%  tp=" + fixed(r.tp_pct, 1) + "%\n";
    out += "counts: tn=" + std::to_string(r.tn) + " fp=" + std::to_string(r.fp) +
           " fn=" + std::to_string(r.fn) + " tp=" + std::to_string(r.tp) + "\n";
    out += "precision=" + fixed(r.precision, 2) + " recall=" + fixed(r.recall, 2) +
           " f1=" + fixed(r.f1, 2) + " balanced_accuracy=" + fixed(r.balanced_accuracy, 2) +
           "\n";
    if (r.degenerate) out += "warning: a metric denominator was zero; affected metrics reported as 0\n";
    return out;
}

std::string format_report_json(const EvalReport& r) {
    nlohmann::json j;
    j["counts"] = {{"tn", r.tn}, {"fp", r.fp}, {"fn", r.fn}, {"tp", r.tp}};
    j["percent"] = {{"tn", fixed(r.tn_pct, 1)},
                    {"fp", fixed(r.fp_pct, 1)},
                    {"fn", fixed(r.fn_pct, 1)},
                    {"tp", fixed(r.tp_pct, 1)}};
    j["metrics"] = {{"precision", fixed(r.precision, 2)},
                    {"recall", fixed(r.recall, 2)},
                    {"f1", fixed(r.f1, 2)},
                    {"balanced_accuracy", fixed(r.balanced_accuracy, 2)}};
    j["full_precision"] = {{"precision", r.precision},
                           {"recall", r.recall},
                           {"f1", r.f1},
                           {"balanced_accuracy", r.balanced_accuracy},
                           {"accuracy", r.accuracy},
                           {"tn_pct", r.tn_pct},
                           {"fp_pct", r.fp_pct},
                           {"fn_pct", r.fn_pct},
                           {"tp_pct", r.tp_pct}};
    j["degenerate"] = r.degenerate;
    return j.dump(2) + "\n";
}

} // namespace kan
