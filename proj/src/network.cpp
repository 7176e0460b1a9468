#include "kan/network.hpp"

#include "kan/errors.hpp"
#include "kan/rng.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace kan {

double edge_eval(const EdgeActivation& edge, const SplineGrid& grid, double x) {
    std::vector<double> basis(grid.basis_count());
    basis_eval(grid, x, basis);
    double spline = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) spline += edge.coeffs[i] * basis[i];
    return edge.w_base * silu(x) + edge.w_spline * spline;
}

namespace {

// One layer's forward pass with the per-input basis rows computed once and
// shared by the whole edge column. `basis` is in_dim x basis_count scratch.
void layer_forward_shared(const KanLayer& layer, std::span<const double> x,
                          std::vector<double>& basis, std::vector<double>& silu_vals,
                          std::span<double> y) {
    const int nb = layer.grid.basis_count();
    for (int i = 0; i < layer.in_dim; ++i) {
        basis_eval(layer.grid, x[i], std::span<double>(basis.data() + static_cast<std::size_t>(i) * nb, nb));
        silu_vals[i] = silu(x[i]);
    }
    for (int j = 0; j < layer.out_dim; ++j) {
        double sum = 0.0;
        for (int i = 0; i < layer.in_dim; ++i) {
            const EdgeActivation& e = layer.edge(j, i);
            const double* b = basis.data() + static_cast<std::size_t>(i) * nb;
            double spline = 0.0;
            for (int m = 0; m < nb; ++m) spline += e.coeffs[m] * b[m];
            sum += e.w_base * silu_vals[i] + e.w_spline * spline;
        }
        y[j] = sum;
    }
}

void check_layer_shapes(const KanNetwork& net) {
    if (net.widths.size() < 2)
        throw std::invalid_argument("KanNetwork: need at least one layer");
    if (net.layers.size() + 1 != net.widths.size())
        throw DimensionMismatchError("KanNetwork: layers do not match widths");
}

} // namespace

std::vector<double> layer_forward(const KanLayer& layer, std::span<const double> x) {
    if (static_cast<int>(x.size()) != layer.in_dim)
        throw DimensionMismatchError("layer_forward: expected " + std::to_string(layer.in_dim) +
                                     " inputs, got " + std::to_string(x.size()));
    std::vector<double> basis(static_cast<std::size_t>(layer.in_dim) * layer.grid.basis_count());
    std::vector<double> silu_vals(layer.in_dim);
    std::vector<double> y(layer.out_dim);
    layer_forward_shared(layer, x, basis, silu_vals, y);
    return y;
}

std::vector<double> network_forward(const KanNetwork& net, std::span<const double> x) {
    check_layer_shapes(net);
    if (static_cast<int>(x.size()) != net.input_dim())
        throw DimensionMismatchError("network_forward: expected " +
                                     std::to_string(net.input_dim()) + " inputs, got " +
                                     std::to_string(x.size()));
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    std::vector<double> basis;
    std::vector<double> silu_vals;
    for (const KanLayer& layer : net.layers) {
        basis.resize(static_cast<std::size_t>(layer.in_dim) * layer.grid.basis_count());
        silu_vals.resize(layer.in_dim);
        next.resize(layer.out_dim);
        layer_forward_shared(layer, cur, basis, silu_vals, next);
        cur = next;
    }
    return cur;
}

int classify(const KanNetwork& net, std::span<const double> x) {
    std::vector<double> logits = network_forward(net, x);
    if (logits.size() != 2)
        throw DimensionMismatchError("classify: network does not end in 2 logits");
    return label_from_logits(logits[0], logits[1]);
}

std::size_t KanNetwork::parameter_count() const {
    std::size_t n = 0;
    for (const KanLayer& layer : layers) {
        n += layer.edges.size() * (static_cast<std::size_t>(layer.grid.basis_count()) + 2);
    }
    return n;
}

void GradientSet::scale(double s) {
    for (auto& layer : layers) {
        for (auto& e : layer.edges) {
            for (double& c : e.coeffs) c *= s;
            e.w_spline *= s;
            e.w_base *= s;
        }
    }
}

void GradientSet::accumulate(const GradientSet& other, double s) {
    if (layers.size() != other.layers.size())
        throw DimensionMismatchError("GradientSet::accumulate: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& mine = layers[l].edges;
        const auto& theirs = other.layers[l].edges;
        if (mine.size() != theirs.size())
            throw DimensionMismatchError("GradientSet::accumulate: edge count mismatch");
        for (std::size_t e = 0; e < mine.size(); ++e) {
            for (std::size_t m = 0; m < mine[e].coeffs.size(); ++m) {
                mine[e].coeffs[m] += s * theirs[e].coeffs[m];
            }
            mine[e].w_spline += s * theirs[e].w_spline;
            mine[e].w_base += s * theirs[e].w_base;
        }
    }
}

GradientSet make_zero_gradients(const KanNetwork& net) {
    GradientSet g;
    g.layers.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const KanLayer& layer = net.layers[l];
        g.layers[l].edges.resize(layer.edges.size());
        for (auto& e : g.layers[l].edges) {
            e.coeffs.assign(layer.grid.basis_count(), 0.0);
            e.w_spline = 0.0;
            e.w_base = 0.0;
        }
    }
    return g;
}

void backward_accumulate(const KanNetwork& net, std::span<const double> x,
                         std::span<const double> upstream, double scale,
                         GradientSet& acc) {
    check_layer_shapes(net);
    if (static_cast<int>(x.size()) != net.input_dim())
        throw DimensionMismatchError("backward: input length mismatch");
    if (static_cast<int>(upstream.size()) != net.output_dim())
        throw DimensionMismatchError("backward: upstream length mismatch");
    if (acc.layers.size() != net.layers.size())
        throw DimensionMismatchError("backward: gradient accumulator shape mismatch");

    // Forward pass, keeping every layer's input.
    const std::size_t n_layers = net.layers.size();
    std::vector<std::vector<double>> inputs(n_layers);
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> basis;
    std::vector<double> silu_vals;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const KanLayer& layer = net.layers[l];
        inputs[l] = cur;
        basis.resize(static_cast<std::size_t>(layer.in_dim) * layer.grid.basis_count());
        silu_vals.resize(layer.in_dim);
        std::vector<double> next(layer.out_dim);
        layer_forward_shared(layer, cur, basis, silu_vals, next);
        cur = next;
    }

    // Backward pass.
    std::vector<double> g_out(upstream.begin(), upstream.end());
    std::vector<double> g_in;
    std::vector<double> dbasis;
    for (std::size_t li = n_layers; li-- > 0;) {
        const KanLayer& layer = net.layers[li];
        const std::vector<double>& in = inputs[li];
        const int nb = layer.grid.basis_count();

        basis.resize(static_cast<std::size_t>(layer.in_dim) * nb);
        dbasis.resize(static_cast<std::size_t>(layer.in_dim) * nb);
        silu_vals.resize(layer.in_dim);
        std::vector<double> silu_derivs(layer.in_dim);
        std::vector<bool> on_grid(layer.in_dim);
        for (int i = 0; i < layer.in_dim; ++i) {
            auto brow = std::span<double>(basis.data() + static_cast<std::size_t>(i) * nb, nb);
            auto drow = std::span<double>(dbasis.data() + static_cast<std::size_t>(i) * nb, nb);
            basis_eval(layer.grid, in[i], brow);
            basis_derivative(layer.grid, in[i], drow);
            silu_vals[i] = silu(in[i]);
            silu_derivs[i] = silu_derivative(in[i]);
            on_grid[i] = in[i] >= layer.grid.lo && in[i] <= layer.grid.hi;
        }

        g_in.assign(layer.in_dim, 0.0);
        LayerGradient& lg = acc.layers[li];
        for (int j = 0; j < layer.out_dim; ++j) {
            const double gj = g_out[j];
            for (int i = 0; i < layer.in_dim; ++i) {
                const EdgeActivation& e = layer.edge(j, i);
                EdgeGradient& eg = lg.edges[static_cast<std::size_t>(j) * layer.in_dim + i];
                const double* b = basis.data() + static_cast<std::size_t>(i) * nb;
                const double* db = dbasis.data() + static_cast<std::size_t>(i) * nb;

                double spline = 0.0;
                double dspline = 0.0;
                for (int m = 0; m < nb; ++m) {
                    spline += e.coeffs[m] * b[m];
                    dspline += e.coeffs[m] * db[m];
                }
                if (gj != 0.0) {
                    const double gs = gj * scale;
                    for (int m = 0; m < nb; ++m) eg.coeffs[m] += gs * e.w_spline * b[m];
                    eg.w_spline += gs * spline;
                    eg.w_base += gs * silu_vals[i];
                }
                double dphi_dx = e.w_base * silu_derivs[i];
                if (on_grid[i]) dphi_dx += e.w_spline * dspline;
                g_in[i] += gj * dphi_dx;
            }
        }
        g_out = g_in;
    }
}

GradientSet backward(const KanNetwork& net, std::span<const double> x,
                     std::span<const double> upstream) {
    GradientSet g = make_zero_gradients(net);
    backward_accumulate(net, x, upstream, 1.0, g);
    return g;
}

KanNetwork init_network(const std::vector<int>& widths, const InitOptions& opts,
                        std::uint64_t seed) {
    if (widths.size() < 2)
        throw std::invalid_argument("init_network: need at least 2 widths");
    for (int w : widths) {
        if (w < 1) throw std::invalid_argument("init_network: widths must be positive");
    }

    KanNetwork net;
    net.widths = widths;
    net.meta.seed = seed;
    Rng rng(derive_seed(seed, 0x1417));

    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        KanLayer layer;
        layer.in_dim = widths[l];
        layer.out_dim = widths[l + 1];
        layer.grid = make_grid(opts.degree, opts.grid_intervals, opts.grid_lo, opts.grid_hi);
        layer.edges.resize(static_cast<std::size_t>(layer.in_dim) * layer.out_dim);
        for (int j = 0; j < layer.out_dim; ++j) {
            for (int i = 0; i < layer.in_dim; ++i) {
                EdgeActivation& e = layer.edge(j, i);
                e.coeffs.resize(layer.grid.basis_count());
                for (double& c : e.coeffs) c = rng.normal(0.0, opts.coeff_stddev);
                e.w_spline = opts.w_spline_init;
                e.w_base = opts.w_base_init;
            }
        }
        net.layers.push_back(std::move(layer));
    }
    return net;
}

std::uint64_t network_fingerprint(const KanNetwork& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        h = fnv1a(&bits, sizeof bits, h);
    };
    for (int w : net.widths) {
        std::uint64_t wv = static_cast<std::uint64_t>(w);
        h = fnv1a(&wv, sizeof wv, h);
    }
    for (const KanLayer& layer : net.layers) {
        for (const EdgeActivation& e : layer.edges) {
            for (double c : e.coeffs) mix(c);
            mix(e.w_spline);
            mix(e.w_base);
        }
    }
    return h;
}

} // namespace kan
