#ifndef KAN_NETWORK_HPP
#define KAN_NETWORK_HPP

#include "kan/spline.hpp"
#include "kan/standardize.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace kan {

// One learnable univariate edge function:
//   phi(x) = w_base * silu(x) + w_spline * sum_i coeffs[i] * B_i(clamp(x))
// The silu residual keeps a gradient path alive outside the grid, where the
// clamped spline term goes flat.
struct EdgeActivation {
    std::vector<double> coeffs; // one per basis function of the layer grid
    double w_spline = 1.0;
    double w_base = 1.0;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

inline double silu_derivative(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

double edge_eval(const EdgeActivation& edge, const SplineGrid& grid, double x);

// Fully connected layer: out_dim x in_dim edge functions over one shared
// grid, summed at the output nodes. No node bias, no node nonlinearity.
struct KanLayer {
    int in_dim = 0;
    int out_dim = 0;
    SplineGrid grid;
    std::vector<EdgeActivation> edges; // row-major: edge(out, in)

    EdgeActivation& edge(int out, int in) { return edges[static_cast<std::size_t>(out) * in_dim + in]; }
    const EdgeActivation& edge(int out, int in) const {
        return edges[static_cast<std::size_t>(out) * in_dim + in];
    }
};

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x);

// Everything the model file carries besides the parameters themselves.
struct NetworkMeta {
    std::uint64_t seed = 0;
    double split_fraction = 0.0;        // 0 when the model was not trained
    std::uint64_t data_fingerprint = 0; // 0 when the model was not trained
    std::optional<Standardizer> standardizer;
};

// Layer stack. Immutable after training for inference purposes; forward and
// classify are safe to call from any number of threads.
struct KanNetwork {
    std::vector<int> widths; // n_0, n_1, ..., n_L
    std::vector<KanLayer> layers;
    NetworkMeta meta;

    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    std::size_t parameter_count() const;
};

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x);

// Decision rule shared by the full model and the symbolic classifier:
// 1 (malicious) iff the second logit strictly exceeds the first.
inline int label_from_logits(double logit_normal, double logit_attack) {
    return logit_attack > logit_normal ? 1 : 0;
}

int classify(const KanNetwork& net, std::span<const double> x);

// Loss partials laid out exactly like the network parameters.
struct EdgeGradient {
    std::vector<double> coeffs;
    double w_spline = 0.0;
    double w_base = 0.0;
};

struct LayerGradient {
    std::vector<EdgeGradient> edges; // row-major, matching KanLayer::edges
};

struct GradientSet {
    std::vector<LayerGradient> layers;

    void scale(double s);
    void accumulate(const GradientSet& other, double s = 1.0);
};

GradientSet make_zero_gradients(const KanNetwork& net);

// Exact chain-rule partials of upstream . logits with respect to every
// parameter. `upstream` is d(loss)/d(logits). Inputs clamped off the grid
// contribute no spline derivative; the silu term still propagates.
GradientSet backward(const KanNetwork& net, std::span<const double> x,
                     std::span<const double> upstream);

// Accumulating flavor for mini-batches: adds `scale` times the sample
// gradient into `acc` in a fixed order, keeping training deterministic.
void backward_accumulate(const KanNetwork& net, std::span<const double> x,
                         std::span<const double> upstream, double scale,
                         GradientSet& acc);

struct InitOptions {
    int degree = 3;
    int grid_intervals = 3;
    double grid_lo = -1.0;
    double grid_hi = 1.0;
    double coeff_stddev = 0.1;
    double w_spline_init = 1.0;
    double w_base_init = 1.0;
};

// Deterministic per seed: coefficients ~ Normal(0, coeff_stddev), drawn layer
// by layer, edges row-major. Throws std::invalid_argument for width lists
// shorter than 2 or containing non-positive entries.
KanNetwork init_network(const std::vector<int>& widths, const InitOptions& opts,
                        std::uint64_t seed);

// Parameter-level hash, used as the symbolic model's source fingerprint.
std::uint64_t network_fingerprint(const KanNetwork& net);

} // namespace kan

#endif
