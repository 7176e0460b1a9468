#ifndef KAN_SPLINE_HPP
#define KAN_SPLINE_HPP

#include <span>
#include <vector>

namespace kan {

// Uniform B-spline family over [lo, hi]: `num_intervals` interior intervals,
// knot vector extended `degree` steps past each end. Immutable once built;
// all evaluation routines are pure and thread-safe.
struct SplineGrid {
    int degree = 3;
    int num_intervals = 3;
    double lo = -1.0;
    double hi = 1.0;
    std::vector<double> knots; // num_intervals + 2*degree + 1 values, uniform step

    int basis_count() const { return num_intervals + degree; }
    double step() const { return (hi - lo) / num_intervals; }
    double clamp(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
};

// Throws std::invalid_argument when degree < 0, num_intervals < 1 or lo >= hi.
SplineGrid make_grid(int degree, int num_intervals, double lo, double hi);

// B_i(clamp(x)) for every basis function, via the de Boor triangular scheme
// over the single active knot span. Values are non-negative, at most
// degree + 1 of them nonzero, and sum to 1 on [lo, hi].
void basis_eval(const SplineGrid& grid, double x, std::span<double> out);
std::vector<double> basis_eval(const SplineGrid& grid, double x);

// dB_i/dx at clamp(x) from the degree-(k-1) difference identity.
// Throws std::invalid_argument for degree-0 grids.
void basis_derivative(const SplineGrid& grid, double x, std::span<double> out);
std::vector<double> basis_derivative(const SplineGrid& grid, double x);

// Least-squares spline coefficients for samples (xs, ys): normal equations
// with a 1e-8 ridge on the diagonal, solved by Cholesky factorization.
// Throws std::invalid_argument on bad sample sets and SingularSystemError
// when the system is unsolvable even with the ridge.
std::vector<double> fit_coefficients(const SplineGrid& grid,
                                     std::span<const double> xs,
                                     std::span<const double> ys);

} // namespace kan

#endif
