#ifndef KAN_TRAIN_HPP
#define KAN_TRAIN_HPP

#include "kan/dataset.hpp"
#include "kan/network.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace kan {

enum class ClassWeighting { balanced, none };

struct TrainConfig {
    int epochs = 50;
    double split_fraction = 0.8;
    std::uint64_t seed = 0;
    double learning_rate = 1e-2;
    int batch_size = 256;
    ClassWeighting class_weighting = ClassWeighting::balanced;
    std::vector<int> widths = {4, 5, 2};
    int degree = 3;
    int grid_intervals = 3;
    double grid_lo = -1.0;
    double grid_hi = 1.0;
    // When false, w_base starts at 0 and stays frozen, reducing every edge to
    // its pure spline term.
    bool residual_base = true;

    void validate() const; // throws std::invalid_argument
};

struct EpochStats {
    int epoch = 0;            // 1-based
    double mean_loss = 0.0;   // weighted cross-entropy over the epoch
    double balanced_accuracy = 0.0; // on the training split, end of epoch
};

struct TrainResult {
    KanNetwork network;
    std::vector<EpochStats> history;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    int best_epoch = 0; // 1-based epoch whose checkpoint was kept
};

// Deterministic per-class split: proportions preserved within one sample,
// partitions disjoint and exhaustive. Throws ClassStarvationError when either
// side of either class would be empty.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
stratified_split(const TelemetryDataset& ds, double fraction, std::uint64_t seed);

struct LossGrad {
    double loss = 0.0;
    std::array<double, 2> grad{0.0, 0.0}; // d loss / d logits
};

// loss = -w[label] * log softmax(logits)[label], max-subtracted for
// stability; gradient is w[label] * (softmax - onehot).
LossGrad weighted_cross_entropy(std::span<const double> logits, int label,
                                std::span<const double> weights);

// Adaptive-moment gradient descent over the network's parameter tree.
// Update order is fixed (layers, then edges row-major, then coefficients,
// w_spline, w_base), so optimization is bit-deterministic.
class AdamOptimizer {
public:
    struct Config {
        double learning_rate = 1e-2;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    AdamOptimizer(const KanNetwork& net, Config cfg);
    void step(KanNetwork& net, const GradientSet& grad);

private:
    Config cfg_;
    GradientSet m_;
    GradientSet v_;
    long step_count_ = 0;
};

// Full training pipeline on a labeled dataset: stratified split, standardizer
// fitted on the training side only, class-weighted cross-entropy minimized by
// Adam over cfg.epochs, balanced accuracy tracked per epoch on the training
// split, and the best-epoch checkpoint kept. Deterministic per seed.
TrainResult train(const TelemetryDataset& ds, const TrainConfig& cfg);

} // namespace kan

#endif
