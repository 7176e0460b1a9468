#include "kan/train.hpp"

#include "kan/errors.hpp"
#include "kan/metrics.hpp"
#include "kan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kan {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: split_fraction must be in (0, 1)");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (widths.size() < 2) throw std::invalid_argument("TrainConfig: widths need at least 2 entries");
    if (widths.front() != kFeatureCount)
        throw std::invalid_argument("TrainConfig: first width must equal the feature count (" +
                                    std::to_string(kFeatureCount) + ")");
    if (widths.back() != 2)
        throw std::invalid_argument("TrainConfig: last width must be 2 (the two logits)");
    for (int w : widths) {
        if (w < 1) throw std::invalid_argument("TrainConfig: widths must be positive");
    }
    if (degree < 0 || grid_intervals < 1 || !(grid_lo < grid_hi))
        throw std::invalid_argument("TrainConfig: invalid grid parameters");
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const TelemetryDataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        by_class[ds.samples[i].label].push_back(i);
    }
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < 2)
            throw ClassStarvationError("stratified_split: class " + std::to_string(c) +
                                       " has fewer than 2 samples");
    }

    std::vector<std::size_t> train, test;
    for (int c = 0; c < 2; ++c) {
        auto& indices = by_class[c];
        Rng rng(derive_seed(seed, 0x5117 + static_cast<std::uint64_t>(c)));
        rng.shuffle(indices);
        auto n_train = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(indices.size())));
        if (n_train == 0 || n_train == indices.size())
            throw ClassStarvationError("stratified_split: class " + std::to_string(c) +
                                       " would leave an empty partition");
        train.insert(train.end(), indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), indices.begin() + static_cast<std::ptrdiff_t>(n_train), indices.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

LossGrad weighted_cross_entropy(std::span<const double> logits, int label,
                                std::span<const double> weights) {
    if (logits.size() != 2 || weights.size() != 2)
        throw DimensionMismatchError("weighted_cross_entropy: expects 2 logits and 2 weights");
    if (label != 0 && label != 1)
        throw std::invalid_argument("weighted_cross_entropy: label must be 0 or 1");

    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    const double z = e0 + e1;
    const double p0 = e0 / z;
    const double p1 = e1 / z;
    const double w = weights[label];

    LossGrad out;
    // log(p) via the max-subtracted form keeps the loss finite for any logits.
    out.loss = -w * ((label == 0 ? logits[0] : logits[1]) - m - std::log(z));
    out.grad[0] = w * (p0 - (label == 0 ? 1.0 : 0.0));
    out.grad[1] = w * (p1 - (label == 1 ? 1.0 : 0.0));
    return out;
}

AdamOptimizer::AdamOptimizer(const KanNetwork& net, Config cfg)
    : cfg_(cfg), m_(make_zero_gradients(net)), v_(make_zero_gradients(net)) {}

void AdamOptimizer::step(KanNetwork& net, const GradientSet& grad) {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

    auto update = [this, bc1, bc2](double& param, double& m, double& v, double g) {
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        param -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    };

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& edges = net.layers[l].edges;
        for (std::size_t e = 0; e < edges.size(); ++e) {
            EdgeActivation& p = edges[e];
            EdgeGradient& mg = m_.layers[l].edges[e];
            EdgeGradient& vg = v_.layers[l].edges[e];
            const EdgeGradient& g = grad.layers[l].edges[e];
            for (std::size_t c = 0; c < p.coeffs.size(); ++c) {
                update(p.coeffs[c], mg.coeffs[c], vg.coeffs[c], g.coeffs[c]);
            }
            update(p.w_spline, mg.w_spline, vg.w_spline, g.w_spline);
            update(p.w_base, mg.w_base, vg.w_base, g.w_base);
        }
    }
}

namespace {

double balanced_accuracy_on(const KanNetwork& net, const TelemetryDataset& ds,
                            std::span<const std::size_t> indices,
                            std::span<const std::array<double, kFeatureCount>> standardized) {
    std::int64_t tn = 0, fp = 0, fn = 0, tp = 0;
    for (std::size_t idx : indices) {
        int predicted = classify(net, standardized[idx]);
        if (ds.samples[idx].label == 0) {
            (predicted == 0 ? tn : fp)++;
        } else {
            (predicted == 1 ? tp : fn)++;
        }
    }
    return report_from_counts(tn, fp, fn, tp).balanced_accuracy;
}

void zero_gradients(GradientSet& g) {
    for (auto& layer : g.layers) {
        for (auto& e : layer.edges) {
            std::fill(e.coeffs.begin(), e.coeffs.end(), 0.0);
            e.w_spline = 0.0;
            e.w_base = 0.0;
        }
    }
}

// w_base is frozen at its initial value when the residual term is disabled.
void freeze_base(GradientSet& g) {
    for (auto& layer : g.layers) {
        for (auto& e : layer.edges) e.w_base = 0.0;
    }
}

} // namespace

TrainResult train(const TelemetryDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    if (ds.samples.empty()) throw DataError("train: empty dataset");

    auto [train_idx, test_idx] = stratified_split(ds, cfg.split_fraction, cfg.seed);

    // Standardizer from the training split only.
    std::vector<std::vector<double>> train_rows;
    train_rows.reserve(train_idx.size());
    for (std::size_t idx : train_idx) {
        auto f = ds.samples[idx].features();
        train_rows.emplace_back(f.begin(), f.end());
    }
    Standardizer standardizer = fit_standardizer(train_rows);

    // Standardize every sample once up front.
    std::vector<std::array<double, kFeatureCount>> standardized(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        auto f = ds.samples[i].features();
        standardizer.transform(f, standardized[i]);
    }

    // Class weights on the training split.
    std::array<double, 2> weights{1.0, 1.0};
    if (cfg.class_weighting == ClassWeighting::balanced) {
        std::size_t n_class[2] = {0, 0};
        for (std::size_t idx : train_idx) n_class[ds.samples[idx].label]++;
        const double n_total = static_cast<double>(train_idx.size());
        weights[0] = n_total / (2.0 * static_cast<double>(n_class[0]));
        weights[1] = n_total / (2.0 * static_cast<double>(n_class[1]));
    }

    InitOptions init;
    init.degree = cfg.degree;
    init.grid_intervals = cfg.grid_intervals;
    init.grid_lo = cfg.grid_lo;
    init.grid_hi = cfg.grid_hi;
    init.w_base_init = cfg.residual_base ? 1.0 : 0.0;
    KanNetwork net = init_network(cfg.widths, init, cfg.seed);
    net.meta.split_fraction = cfg.split_fraction;
    net.meta.data_fingerprint = dataset_fingerprint(ds);
    net.meta.standardizer = standardizer;

    AdamOptimizer::Config adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    AdamOptimizer optimizer(net, adam_cfg);

    Rng shuffle_rng(derive_seed(cfg.seed, 0x0e90c));
    std::vector<std::size_t> order = train_idx;
    GradientSet batch_grad = make_zero_gradients(net);

    TrainResult result;
    result.train_indices = train_idx;
    result.test_indices = test_idx;

    KanNetwork best_net = net;
    double best_ba = -1.0;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            zero_gradients(batch_grad);
            for (std::size_t s = start; s < end; ++s) {
                const std::size_t idx = order[s];
                const auto& x = standardized[idx];
                std::vector<double> logits = network_forward(net, x);
                LossGrad lg = weighted_cross_entropy(logits, ds.samples[idx].label, weights);
                loss_sum += lg.loss;
                backward_accumulate(net, x, lg.grad, inv_batch, batch_grad);
            }
            if (!cfg.residual_base) freeze_base(batch_grad);
            optimizer.step(net, batch_grad);
        }

        const double mean_loss = loss_sum / static_cast<double>(order.size());
        if (!std::isfinite(mean_loss))
            throw DivergedLossError("train: loss diverged at epoch " + std::to_string(epoch));

        const double ba = balanced_accuracy_on(net, ds, train_idx, standardized);
        result.history.push_back({epoch, mean_loss, ba});
        if (ba > best_ba) {
            best_ba = ba;
            best_epoch = epoch;
            best_net = net;
        }
    }

    result.network = std::move(best_net);
    result.best_epoch = best_epoch;
    return result;
}

} // namespace kan
