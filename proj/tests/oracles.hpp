// Independent reference implementations used to cross-check the library.
// Everything here is deliberately written the slow, textbook way and shares
// no code with src/: recursive Cox-de Boor instead of the triangular scheme,
// plain nested loops instead of layer_forward, and central differences
// instead of backpropagation.
#ifndef KAN_TESTS_ORACLES_HPP
#define KAN_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "kan/network.hpp"
#include "kan/spline.hpp"

namespace oracle {

// Recursive Cox-de Boor evaluation of every basis function. The degree-0
// base case assigns x to exactly one knot span, reproducing the library's
// convention that inputs clamp to [lo, hi] and x == hi belongs to the last
// interior span.
class NaiveBasis {
public:
    explicit NaiveBasis(const kan::SplineGrid& grid)
        : knots_(grid.knots), degree_(grid.degree), lo_(grid.lo), hi_(grid.hi),
          count_(grid.basis_count()),
          step_((grid.hi - grid.lo) / grid.num_intervals),
          last_span_(grid.degree + grid.num_intervals - 1) {}

    std::vector<double> eval(double x) const {
        const double cx = std::min(std::max(x, lo_), hi_);
        int span = degree_ + static_cast<int>(std::floor((cx - lo_) / step_));
        span = std::min(std::max(span, degree_), last_span_);
        std::vector<double> out(static_cast<std::size_t>(count_), 0.0);
        for (int i = 0; i < count_; ++i) {
            out[static_cast<std::size_t>(i)] = basis(i, degree_, cx, span);
        }
        return out;
    }

private:
    double basis(int i, int d, double x, int span) const {
        if (d == 0) return i == span ? 1.0 : 0.0;
        const auto ui = static_cast<std::size_t>(i);
        double acc = 0.0;
        const double dl = knots_[ui + static_cast<std::size_t>(d)] - knots_[ui];
        if (dl > 0.0) acc += (x - knots_[ui]) / dl * basis(i, d - 1, x, span);
        const double dr = knots_[ui + static_cast<std::size_t>(d) + 1] - knots_[ui + 1];
        if (dr > 0.0)
            acc += (knots_[ui + static_cast<std::size_t>(d) + 1] - x) / dr *
                   basis(i + 1, d - 1, x, span);
        return acc;
    }

    std::vector<double> knots_;
    int degree_;
    double lo_, hi_;
    int count_;
    double step_;
    int last_span_;
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// Naive edge response: w_base * silu(x) + w_spline * sum_i c_i B_i(x).
inline double edge_value(const kan::EdgeActivation& e, const NaiveBasis& nb, double x) {
    const std::vector<double> b = nb.eval(x);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) s += e.coeffs[i] * b[i];
    return e.w_base * silu(x) + e.w_spline * s;
}

// Independent full forward pass.
inline std::vector<double> forward(const kan::KanNetwork& net, std::vector<double> x) {
    for (const auto& layer : net.layers) {
        const NaiveBasis nb(layer.grid);
        std::vector<double> y(static_cast<std::size_t>(layer.out_dim), 0.0);
        for (int o = 0; o < layer.out_dim; ++o) {
            double acc = 0.0;
            for (int i = 0; i < layer.in_dim; ++i) {
                acc += edge_value(layer.edge(o, i), nb, x[static_cast<std::size_t>(i)]);
            }
            y[static_cast<std::size_t>(o)] = acc;
        }
        x = std::move(y);
    }
    return x;
}

// |got - want| relative to the larger magnitude, with an absolute floor so
// near-zero pairs do not explode the ratio.
inline double rel_err(double got, double want, double floor_abs = 1e-7) {
    const double denom = std::max({std::fabs(got), std::fabs(want), floor_abs});
    return std::fabs(got - want) / denom;
}

// Gradient-check error normalized by its allowance: values <= 1 satisfy
// |got - want| <= atol + rtol * max(|got|, |want|). The absolute branch
// covers gradients so small that central differences bottom out in floating
// cancellation noise (~|f| * machine-eps / eps ~ 1e-10 here).
inline double tol_excess(double got, double want, double rtol, double atol) {
    const double allowed = atol + rtol * std::max(std::fabs(got), std::fabs(want));
    return std::fabs(got - want) / allowed;
}

// Mutable views of every network parameter in the order GradientSet flattens
// to: layers, edges row-major, coefficients, then w_spline, then w_base.
inline std::vector<double*> parameter_refs(kan::KanNetwork& net) {
    std::vector<double*> out;
    for (auto& layer : net.layers) {
        for (auto& e : layer.edges) {
            for (auto& c : e.coeffs) out.push_back(&c);
            out.push_back(&e.w_spline);
            out.push_back(&e.w_base);
        }
    }
    return out;
}

inline std::vector<double> flatten(const kan::GradientSet& g) {
    std::vector<double> out;
    for (const auto& layer : g.layers) {
        for (const auto& e : layer.edges) {
            out.insert(out.end(), e.coeffs.begin(), e.coeffs.end());
            out.push_back(e.w_spline);
            out.push_back(e.w_base);
        }
    }
    return out;
}

// Central-difference gradient of upstream . logits with respect to every
// parameter, in parameter_refs order. Uses the library forward pass: the
// point is to validate backward() against an independent derivative, not to
// re-derive the forward values (oracle::forward covers those).
inline std::vector<double> fd_gradient(kan::KanNetwork& net, const std::vector<double>& x,
                                       const std::vector<double>& upstream,
                                       double eps = 1e-5) {
    const std::vector<double*> ps = parameter_refs(net);
    auto project = [&net, &x, &upstream]() {
        const std::vector<double> logits = kan::network_forward(net, x);
        double s = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) s += upstream[i] * logits[i];
        return s;
    };
    std::vector<double> out;
    out.reserve(ps.size());
    for (double* p : ps) {
        const double saved = *p;
        *p = saved + eps;
        const double fp = project();
        *p = saved - eps;
        const double fm = project();
        *p = saved;
        out.push_back((fp - fm) / (2.0 * eps));
    }
    return out;
}

} // namespace oracle

#endif
