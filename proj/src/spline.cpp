#include "kan/spline.hpp"

#include "kan/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace kan {

SplineGrid make_grid(int degree, int num_intervals, double lo, double hi) {
    if (degree < 0) throw std::invalid_argument("make_grid: degree must be >= 0");
    if (num_intervals < 1) throw std::invalid_argument("make_grid: num_intervals must be >= 1");
    if (!(lo < hi)) throw std::invalid_argument("make_grid: requires lo < hi");

    SplineGrid grid;
    grid.degree = degree;
    grid.num_intervals = num_intervals;
    grid.lo = lo;
    grid.hi = hi;

    const double h = (hi - lo) / num_intervals;
    const int n_knots = num_intervals + 2 * degree + 1;
    grid.knots.resize(n_knots);
    for (int i = 0; i < n_knots; ++i) {
        grid.knots[i] = lo + (i - degree) * h;
    }
    return grid;
}

namespace {

// Index s of the knot span containing x: knots[s] <= x < knots[s+1],
// restricted to the interior spans [degree, degree + num_intervals - 1].
// x == hi falls into the last interior span.
int find_span(const SplineGrid& grid, double x) {
    const int k = grid.degree;
    const int last = k + grid.num_intervals - 1;
    // Uniform knots allow direct index arithmetic.
    int s = k + static_cast<int>(std::floor((x - grid.lo) / grid.step()));
    return std::clamp(s, k, last);
}

// Nonzero basis values N[0..degree] at span s (de Boor triangular scheme);
// N[r] is the value of basis function index s - degree + r.
void local_basis(const SplineGrid& grid, int span, int degree, double x,
                 double* n_out) {
    n_out[0] = 1.0;
    if (degree == 0) return;
    // left[j] = x - knots[span+1-j], right[j] = knots[span+j] - x
    double left[64];
    double right[64];
    for (int j = 1; j <= degree; ++j) {
        left[j] = x - grid.knots[span + 1 - j];
        right[j] = grid.knots[span + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double denom = right[r + 1] + left[j - r];
            double temp = n_out[r] / denom;
            n_out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n_out[j] = saved;
    }
}

} // namespace

void basis_eval(const SplineGrid& grid, double x, std::span<double> out) {
    const int n = grid.basis_count();
    if (static_cast<int>(out.size()) != n)
        throw DimensionMismatchError("basis_eval: output span has wrong length");
    if (grid.degree >= 64)
        throw std::invalid_argument("basis_eval: degree too large");

    x = grid.clamp(x);
    const int k = grid.degree;
    const int span = find_span(grid, x);

    std::fill(out.begin(), out.end(), 0.0);
    double vals[64];
    local_basis(grid, span, k, x, vals);
    for (int r = 0; r <= k; ++r) {
        out[span - k + r] = vals[r];
    }
}

std::vector<double> basis_eval(const SplineGrid& grid, double x) {
    std::vector<double> out(grid.basis_count());
    basis_eval(grid, x, out);
    return out;
}

void basis_derivative(const SplineGrid& grid, double x, std::span<double> out) {
    const int k = grid.degree;
    if (k < 1)
        throw std::invalid_argument("basis_derivative: degree-0 splines have no derivative");
    const int n = grid.basis_count();
    if (static_cast<int>(out.size()) != n)
        throw DimensionMismatchError("basis_derivative: output span has wrong length");

    x = grid.clamp(x);
    const int span = find_span(grid, x);

    // Degree k-1 values at the same span: lower[r] is basis index span-k+1+r.
    double lower[64];
    local_basis(grid, span, k - 1, x, lower);

    std::fill(out.begin(), out.end(), 0.0);
    const auto& t = grid.knots;
    for (int i = span - k; i <= span; ++i) {
        double hi_term = 0.0;
        double lo_term = 0.0;
        if (i >= span - k + 1) {
            double denom = t[i + k] - t[i];
            if (denom != 0.0) lo_term = lower[i - (span - k + 1)] / denom;
        }
        if (i + 1 <= span) {
            double denom = t[i + k + 1] - t[i + 1];
            if (denom != 0.0) hi_term = lower[i + 1 - (span - k + 1)] / denom;
        }
        out[i] = k * (lo_term - hi_term);
    }
}

std::vector<double> basis_derivative(const SplineGrid& grid, double x) {
    std::vector<double> out(grid.basis_count());
    basis_derivative(grid, x, out);
    return out;
}

std::vector<double> fit_coefficients(const SplineGrid& grid,
                                     std::span<const double> xs,
                                     std::span<const double> ys) {
    const int n = grid.basis_count();
    if (xs.size() != ys.size())
        throw std::invalid_argument("fit_coefficients: xs and ys differ in length");
    if (static_cast<int>(xs.size()) < n)
        throw std::invalid_argument("fit_coefficients: need at least " +
                                    std::to_string(n) + " samples");

    constexpr double kRidge = 1e-8;

    // Normal equations A = B^T B + ridge*I, rhs = B^T y.
    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> rhs(n, 0.0);
    std::vector<double> row(n);
    for (std::size_t s = 0; s < xs.size(); ++s) {
        basis_eval(grid, xs[s], row);
        for (int i = 0; i < n; ++i) {
            if (row[i] == 0.0) continue;
            rhs[i] += row[i] * ys[s];
            for (int j = i; j < n; ++j) {
                a[static_cast<std::size_t>(i) * n + j] += row[i] * row[j];
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        a[static_cast<std::size_t>(i) * n + i] += kRidge;
        for (int j = 0; j < i; ++j) {
            a[static_cast<std::size_t>(i) * n + j] = a[static_cast<std::size_t>(j) * n + i];
        }
    }

    // Cholesky A = L L^T.
    std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = a[static_cast<std::size_t>(i) * n + j];
            for (int m = 0; m < j; ++m) {
                sum -= l[static_cast<std::size_t>(i) * n + m] * l[static_cast<std::size_t>(j) * n + m];
            }
            if (i == j) {
                if (!(sum > 0.0) || !std::isfinite(sum))
                    throw SingularSystemError("fit_coefficients: normal equations not positive definite");
                l[static_cast<std::size_t>(i) * n + i] = std::sqrt(sum);
            } else {
                l[static_cast<std::size_t>(i) * n + j] = sum / l[static_cast<std::size_t>(j) * n + j];
            }
        }
    }

    // Forward then backward substitution.
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) {
        double sum = rhs[i];
        for (int m = 0; m < i; ++m) sum -= l[static_cast<std::size_t>(i) * n + m] * z[m];
        z[i] = sum / l[static_cast<std::size_t>(i) * n + i];
    }
    std::vector<double> coeffs(n);
    for (int i = n - 1; i >= 0; --i) {
        double sum = z[i];
        for (int m = i + 1; m < n; ++m) sum -= l[static_cast<std::size_t>(m) * n + i] * coeffs[m];
        coeffs[i] = sum / l[static_cast<std::size_t>(i) * n + i];
    }
    for (double c : coeffs) {
        if (!std::isfinite(c))
            throw SingularSystemError("fit_coefficients: non-finite solution");
    }
    return coeffs;
}

} // namespace kan
