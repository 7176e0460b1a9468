#include "kan/symbolic.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "kan/errors.hpp"

namespace kan {

namespace {

using nlohmann::json;

constexpr int kSnapSamples = 201;
constexpr double kSnapLo = -1.0;
constexpr double kSnapHi = 1.0;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

} // namespace

const char* family_name(Family f) {
    switch (f) {
    case Family::zero: return "zero";
    case Family::linear: return "linear";
    case Family::quadratic: return "quadratic";
    case Family::cubic: return "cubic";
    case Family::quartic: return "quartic";
    case Family::reciprocal: return "reciprocal";
    case Family::sqrt_abs: return "sqrt-abs";
    case Family::exponential: return "exponential";
    case Family::log_abs: return "log-abs";
    case Family::absolute: return "absolute";
    case Family::sine: return "sine";
    case Family::hyperbolic_tangent: return "hyperbolic-tangent";
    case Family::logistic: return "logistic";
    case Family::gaussian: return "gaussian";
    case Family::arctangent: return "arctangent";
    }
    throw std::invalid_argument("unknown family value");
}

const std::vector<Family>& all_families() {
    static const std::vector<Family> families = {
        Family::zero,        Family::linear,    Family::quadratic,
        Family::cubic,       Family::quartic,   Family::reciprocal,
        Family::sqrt_abs,    Family::exponential, Family::log_abs,
        Family::absolute,    Family::sine,      Family::hyperbolic_tangent,
        Family::logistic,    Family::gaussian,  Family::arctangent,
    };
    return families;
}

Family parse_family(const std::string& name) {
    for (Family f : all_families()) {
        if (name == family_name(f)) return f;
    }
    throw std::invalid_argument("unknown family: '" + name + "'");
}

double family_eval(Family f, double t) {
    switch (f) {
    case Family::zero: return 0.0;
    case Family::linear: return t;
    case Family::quadratic: return t * t;
    case Family::cubic: return t * t * t;
    case Family::quartic: return (t * t) * (t * t);
    case Family::reciprocal: return 1.0 / t;
    case Family::sqrt_abs: return std::sqrt(std::abs(t));
    case Family::exponential: return std::exp(t);
    case Family::log_abs: return std::log(std::abs(t));
    case Family::absolute: return std::abs(t);
    case Family::sine: return std::sin(t);
    case Family::hyperbolic_tangent: return std::tanh(t);
    case Family::logistic: return 1.0 / (1.0 + std::exp(-t));
    case Family::gaussian: return std::exp(-t * t);
    case Family::arctangent: return std::atan(t);
    }
    throw std::invalid_argument("unknown family value");
}

double term_eval(const SymbolicTerm& term, double x) {
    if (term.family == Family::zero) return term.d;
    return term.c * family_eval(term.family, term.a * x + term.b) + term.d;
}

namespace {

struct SampledEdge {
    std::vector<double> x; // normalized inputs, always within [-1, 1]
    std::vector<double> y; // fit targets
    double mean_y = 0.0;
    double sstot = 0.0;

    void finalize_stats() {
        mean_y = 0.0;
        for (double v : y) mean_y += v;
        mean_y /= static_cast<double>(y.size());
        sstot = 0.0;
        for (double v : y) {
            const double dy = v - mean_y;
            sstot += dy * dy;
        }
    }
};

// Least-squares fit of y ~ c * f(a*x + b) + d for a fixed family and inner
// map. Returns r2, or -inf when the candidate is inadmissible (a == 0, or a
// pole of the family falls inside the sampling window).
double fit_candidate(Family fam, double a, double b, const SampledEdge& smp,
                     double& out_c, double& out_d) {
    out_c = 0.0;
    out_d = smp.mean_y;
    if (a == 0.0) return kNegInf;
    if (fam == Family::reciprocal || fam == Family::log_abs) {
        // The inner map covers [b - |a|, b + |a|] on the sampling window;
        // reject the candidate if that interval touches the pole at 0.
        const double lo = b - std::abs(a);
        const double hi = b + std::abs(a);
        if (lo <= 1e-9 && hi >= -1e-9) return kNegInf;
    }

    const std::size_t n = smp.x.size();
    std::vector<double> f(n);
    double mean_f = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        f[j] = family_eval(fam, a * smp.x[j] + b);
        mean_f += f[j];
    }
    mean_f /= static_cast<double>(n);

    double sff = 0.0;
    double sfy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double df = f[j] - mean_f;
        sff += df * df;
        sfy += df * (smp.y[j] - smp.mean_y);
    }
    const double c = sff > 1e-14 ? sfy / sff : 0.0;
    const double d = smp.mean_y - c * mean_f;

    double ssres = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double r = smp.y[j] - (c * f[j] + d);
        ssres += r * r;
    }
    out_c = c;
    out_d = d;
    if (smp.sstot <= 1e-300) {
        return ssres <= 1e-18 ? 1.0 : kNegInf;
    }
    return 1.0 - ssres / smp.sstot;
}

// Lattice-plus-refinement search over one sampled edge whose inputs smp.x are
// already normalized to [-1, 1] via x = mid + half * u. The winning inner map
// is re-expressed in original coordinates before returning.
SymbolicTerm snap_sampled(const SampledEdge& smp, double mid, double half) {
    // The constant baseline; every other family must strictly beat it.
    SymbolicTerm best;
    best.family = Family::zero;
    best.d = smp.mean_y;
    best.r2 = smp.sstot <= 1e-300 ? 1.0 : 0.0;

    static const double kAMagnitudes[] = {0.25, 0.375, 0.5,  0.75, 1.0,
                                          1.5,  2.0,   3.0,  4.0,  6.0};
    static const double kBValues[] = {-1.0, -0.5, 0.0, 0.5, 1.0};

    for (Family fam : all_families()) {
        if (fam == Family::zero) continue;

        double fa = 0.0, fb = 0.0, fc = 0.0, fd = 0.0;
        double fr2 = kNegInf;
        for (double mag : kAMagnitudes) {
            for (double sign : {1.0, -1.0}) {
                const double a = sign * mag;
                for (double b : kBValues) {
                    double c, d;
                    const double r2 = fit_candidate(fam, a, b, smp, c, d);
                    if (r2 > fr2) {
                        fa = a; fb = b; fc = c; fd = d; fr2 = r2;
                    }
                }
            }
        }
        if (fr2 == kNegInf) continue; // every cell rejected (pole guard)

        // Local refinement: two rounds of a 3x3 neighborhood sweep at half
        // the local spacing, halving the step again after each round.
        double da = std::abs(fa) * 0.5;
        double db = 0.25;
        for (int round = 0; round < 2; ++round) {
            const double center_a = fa;
            const double center_b = fb;
            for (int ai = -1; ai <= 1; ++ai) {
                for (int bi = -1; bi <= 1; ++bi) {
                    if (ai == 0 && bi == 0) continue;
                    const double a = center_a + ai * da;
                    const double b = center_b + bi * db;
                    double c, d;
                    const double r2 = fit_candidate(fam, a, b, smp, c, d);
                    if (r2 > fr2) {
                        fa = a; fb = b; fc = c; fd = d; fr2 = r2;
                    }
                }
            }
            da *= 0.5;
            db *= 0.5;
        }

        if (fr2 > best.r2) {
            best.family = fam;
            best.a = fa;
            best.b = fb;
            best.c = fc;
            best.d = fd;
            best.r2 = fr2;
        }
    }
    if (best.family != Family::zero) {
        // t = a*u + b with u = (x - mid) / half becomes t = a'*x + b'.
        best.b = best.b - best.a * mid / half;
        best.a = best.a / half;
    }
    return best;
}

} // namespace

SymbolicTerm snap_edge_window(const EdgeActivation& edge, const SplineGrid& grid,
                              double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
        throw std::invalid_argument("snap window must be a finite interval");
    }
    const double mid = 0.5 * (lo + hi);
    double half = 0.5 * (hi - lo);
    if (half < 1e-9) half = 0.5; // degenerate window: widen around the midpoint

    // Sample uniformly in normalized coordinates u in [-1, 1] (x = mid +
    // half * u) so the (a, b) lattice keeps the same meaning whatever the
    // window size.
    SampledEdge smp;
    smp.x.resize(kSnapSamples);
    smp.y.resize(kSnapSamples);
    for (int j = 0; j < kSnapSamples; ++j) {
        smp.x[j] = kSnapLo + (kSnapHi - kSnapLo) * j / (kSnapSamples - 1);
        smp.y[j] = edge_eval(edge, grid, mid + half * smp.x[j]);
    }
    smp.finalize_stats();
    return snap_sampled(smp, mid, half);
}

SymbolicTerm snap_edge(const EdgeActivation& edge, const SplineGrid& grid) {
    return snap_edge_window(edge, grid, kSnapLo, kSnapHi);
}

std::pair<double, double> edge_value_range(const EdgeActivation& edge,
                                           const SplineGrid& grid, double lo,
                                           double hi) {
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < kSnapSamples; ++j) {
        const double x = lo + (hi - lo) * j / (kSnapSamples - 1);
        const double v = edge_eval(edge, grid, x);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    return {vmin, vmax};
}

ExprPtr make_const(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::constant;
    e->value = v;
    return e;
}

ExprPtr make_var(int index) {
    if (index < 0) throw std::invalid_argument("make_var: negative input index");
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::variable;
    e->var_index = index;
    return e;
}

ExprPtr make_term(const SymbolicTerm& term, ExprPtr child) {
    if (!child) throw std::invalid_argument("make_term: null child");
    if (term.family == Family::zero || term.c == 0.0) return make_const(term.d);
    if (child->kind == Expr::Kind::constant) {
        return make_const(term_eval(term, child->value));
    }
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::term;
    e->term = term;
    e->child = std::move(child);
    return e;
}

ExprPtr make_sum(std::vector<ExprPtr> parts) {
    std::vector<ExprPtr> kept;
    double constant = 0.0;
    std::vector<ExprPtr> stack(parts.rbegin(), parts.rend());
    while (!stack.empty()) {
        ExprPtr p = stack.back();
        stack.pop_back();
        if (!p) throw std::invalid_argument("make_sum: null part");
        if (p->kind == Expr::Kind::sum) {
            stack.insert(stack.end(), p->children.rbegin(), p->children.rend());
        } else if (p->kind == Expr::Kind::constant) {
            constant += p->value;
        } else {
            kept.push_back(std::move(p));
        }
    }
    if (constant != 0.0 || kept.empty()) kept.push_back(make_const(constant));
    if (kept.size() == 1) return kept.front();
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::sum;
    e->children = std::move(kept);
    return e;
}

double eval_expr(const Expr& e, const std::vector<double>& x) {
    switch (e.kind) {
    case Expr::Kind::constant:
        return e.value;
    case Expr::Kind::variable:
        if (static_cast<std::size_t>(e.var_index) >= x.size()) {
            throw DimensionMismatchError("expression references input x" +
                                         std::to_string(e.var_index + 1) +
                                         " but only " + std::to_string(x.size()) +
                                         " inputs were given");
        }
        return x[static_cast<std::size_t>(e.var_index)];
    case Expr::Kind::term:
        return term_eval(e.term, eval_expr(*e.child, x));
    case Expr::Kind::sum: {
        double s = 0.0;
        for (const ExprPtr& ch : e.children) s += eval_expr(*ch, x);
        return s;
    }
    }
    throw std::invalid_argument("unknown expression kind");
}

namespace {

// Wraps in parentheses unless the node renders as a single token already.
std::string render_operand(const Expr& e) {
    std::string text = render_expr(e);
    if (e.kind == Expr::Kind::variable) return text;
    if (e.kind == Expr::Kind::constant && text.front() != '-') return text;
    return "(" + text + ")";
}

// "(a * u + b)" with the unit/zero parts elided.
std::string render_inner(const SymbolicTerm& t, const Expr& child) {
    const std::string u = render_operand(child);
    std::string s;
    if (t.a == 1.0) {
        s = u;
    } else if (t.a == -1.0) {
        s = "-" + u;
    } else {
        s = format_double(t.a) + " * " + u;
    }
    if (t.b > 0.0) {
        s += " + " + format_double(t.b);
    } else if (t.b < 0.0) {
        s += " - " + format_double(-t.b);
    }
    return "(" + s + ")";
}

std::string render_term(const SymbolicTerm& t, const Expr& child) {
    const std::string inner = render_inner(t, child);
    std::string body;
    switch (t.family) {
    case Family::zero: return format_double(t.d); // not reached after folding
    case Family::linear: body = inner; break;
    case Family::quadratic: body = inner + "^2"; break;
    case Family::cubic: body = inner + "^3"; break;
    case Family::quartic: body = inner + "^4"; break;
    case Family::reciprocal: body = "1 / " + inner; break;
    case Family::sqrt_abs: body = "sqrt(abs" + inner + ")"; break;
    case Family::exponential: body = "exp" + inner; break;
    case Family::log_abs: body = "log(abs" + inner + ")"; break;
    case Family::absolute: body = "abs" + inner; break;
    case Family::sine: body = "sin" + inner; break;
    case Family::hyperbolic_tangent: body = "tanh" + inner; break;
    case Family::logistic: body = "logistic" + inner; break;
    case Family::gaussian: body = "gauss" + inner; break;
    case Family::arctangent: body = "atan" + inner; break;
    }

    std::string out;
    if (t.c == 1.0) {
        out = body;
    } else if (t.c == -1.0) {
        out = "-" + body;
    } else {
        out = format_double(t.c) + " * " + body;
    }
    if (t.d > 0.0) {
        out += " + " + format_double(t.d);
    } else if (t.d < 0.0) {
        out += " - " + format_double(-t.d);
    }
    return out;
}

} // namespace

std::string render_expr(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::constant:
        return format_double(e.value);
    case Expr::Kind::variable:
        return "x" + std::to_string(e.var_index + 1);
    case Expr::Kind::term:
        return render_term(e.term, *e.child);
    case Expr::Kind::sum: {
        std::string out = render_expr(*e.children.front());
        for (std::size_t i = 1; i < e.children.size(); ++i) {
            std::string part = render_expr(*e.children[i]);
            if (!part.empty() && part.front() == '-') {
                out += " - " + part.substr(1);
            } else {
                out += " + " + part;
            }
        }
        return out;
    }
    }
    throw std::invalid_argument("unknown expression kind");
}

namespace {

// Recursive-descent evaluator for the rendered formula grammar.
struct FormulaParser {
    const std::string& s;
    const std::vector<double>& x;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("formula parse error at offset " +
                                    std::to_string(pos) + ": " + what);
    }

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }

    bool eat(char c) {
        skip_ws();
        if (pos < s.size() && s[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!eat(c)) fail(std::string("expected '") + c + "'");
    }

    double parse_expr() {
        double v = parse_product();
        for (;;) {
            if (eat('+')) {
                v += parse_product();
            } else if (eat('-')) {
                v -= parse_product();
            } else {
                return v;
            }
        }
    }

    double parse_product() {
        double v = parse_factor();
        for (;;) {
            if (eat('*')) {
                v *= parse_factor();
            } else if (eat('/')) {
                v /= parse_factor();
            } else {
                return v;
            }
        }
    }

    double parse_factor() {
        if (eat('-')) return -parse_factor();
        if (eat('+')) return parse_factor();
        return parse_power();
    }

    double parse_power() {
        double v = parse_atom();
        if (eat('^')) {
            return std::pow(v, parse_factor()); // right-associative
        }
        return v;
    }

    double parse_atom() {
        skip_ws();
        if (pos >= s.size()) fail("unexpected end of input");
        if (s[pos] == '(') {
            ++pos;
            double v = parse_expr();
            expect(')');
            return v;
        }
        const char c = s[pos];
        if ((c >= '0' && c <= '9') || c == '.') {
            double v = 0.0;
            auto [next, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), v);
            if (ec != std::errc()) fail("malformed number");
            pos = static_cast<std::size_t>(next - s.data());
            return v;
        }
        if (c >= 'a' && c <= 'z') {
            std::size_t start = pos;
            while (pos < s.size() && s[pos] >= 'a' && s[pos] <= 'z') ++pos;
            const std::string name = s.substr(start, pos - start);
            if (name == "x") {
                std::size_t dstart = pos;
                while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
                if (pos == dstart) fail("variable name needs an index");
                const int index = std::stoi(s.substr(dstart, pos - dstart));
                if (index < 1 || static_cast<std::size_t>(index) > x.size()) {
                    fail("variable x" + std::to_string(index) + " out of range");
                }
                return x[static_cast<std::size_t>(index - 1)];
            }
            expect('(');
            double v = parse_expr();
            expect(')');
            if (name == "sin") return std::sin(v);
            if (name == "tanh") return std::tanh(v);
            if (name == "exp") return std::exp(v);
            if (name == "log") return std::log(v);
            if (name == "abs") return std::abs(v);
            if (name == "sqrt") return std::sqrt(v);
            if (name == "atan") return std::atan(v);
            if (name == "logistic") return 1.0 / (1.0 + std::exp(-v));
            if (name == "gauss") return std::exp(-v * v);
            fail("unknown function '" + name + "'");
        }
        fail("unexpected character");
    }
};

} // namespace

double eval_formula_text(const std::string& text, const std::vector<double>& x) {
    FormulaParser p{text, x};
    const double v = p.parse_expr();
    p.skip_ws();
    if (p.pos != text.size()) p.fail("trailing characters");
    return v;
}

SymbolicModel compose_formulas(
    const KanNetwork& net,
    const std::vector<std::vector<std::vector<SymbolicTerm>>>& snaps) {
    if (snaps.size() != net.layers.size()) {
        throw DimensionMismatchError("compose_formulas: " +
                                     std::to_string(snaps.size()) +
                                     " term layers for a network with " +
                                     std::to_string(net.layers.size()) + " layers");
    }
    for (std::size_t l = 0; l < snaps.size(); ++l) {
        const KanLayer& layer = net.layers[l];
        if (snaps[l].size() != static_cast<std::size_t>(layer.out_dim)) {
            throw DimensionMismatchError("compose_formulas: layer " +
                                         std::to_string(l) + " output mismatch");
        }
        for (const auto& row : snaps[l]) {
            if (row.size() != static_cast<std::size_t>(layer.in_dim)) {
                throw DimensionMismatchError("compose_formulas: layer " +
                                             std::to_string(l) + " input mismatch");
            }
        }
    }

    std::vector<ExprPtr> cur;
    for (int i = 0; i < net.input_dim(); ++i) cur.push_back(make_var(i));
    for (std::size_t l = 0; l < snaps.size(); ++l) {
        std::vector<ExprPtr> next;
        for (std::size_t o = 0; o < snaps[l].size(); ++o) {
            std::vector<ExprPtr> parts;
            parts.reserve(cur.size());
            for (std::size_t i = 0; i < cur.size(); ++i) {
                parts.push_back(make_term(snaps[l][o][i], cur[i]));
            }
            next.push_back(make_sum(std::move(parts)));
        }
        cur = std::move(next);
    }

    SymbolicModel sm;
    sm.widths = net.widths;
    sm.terms = snaps;
    sm.outputs = std::move(cur);
    sm.source_fingerprint = network_fingerprint(net);
    sm.standardizer = net.meta.standardizer;
    return sm;
}

SymbolicModel extract_model(const KanNetwork& net) {
    // First-layer edges see standardized features, which land in [-1, 1] by
    // construction. Hidden layers see sums of upstream activation values that
    // routinely leave that window, so snapping them on [-1, 1] would fit the
    // wrong region entirely. Propagate per-unit value ranges layer by layer
    // (sum of each incoming edge's sampled min/max) and snap every edge over
    // the window its inputs actually cover.
    std::vector<std::pair<double, double>> in_range(
        net.widths.empty() ? 0 : static_cast<std::size_t>(net.widths.front()),
        {kSnapLo, kSnapHi});

    std::vector<std::vector<std::vector<SymbolicTerm>>> snaps;
    snaps.reserve(net.layers.size());
    for (const KanLayer& layer : net.layers) {
        std::vector<std::pair<double, double>> out_range(
            static_cast<std::size_t>(layer.out_dim), {0.0, 0.0});
        std::vector<std::vector<SymbolicTerm>> rows;
        rows.reserve(static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            std::vector<SymbolicTerm> row;
            row.reserve(static_cast<std::size_t>(layer.in_dim));
            for (int i = 0; i < layer.in_dim; ++i) {
                const auto [lo, hi] = in_range[static_cast<std::size_t>(i)];
                row.push_back(snap_edge_window(layer.edge(o, i), layer.grid, lo, hi));
                const auto [vlo, vhi] = edge_value_range(layer.edge(o, i), layer.grid, lo, hi);
                out_range[static_cast<std::size_t>(o)].first += vlo;
                out_range[static_cast<std::size_t>(o)].second += vhi;
            }
            rows.push_back(std::move(row));
        }
        snaps.push_back(std::move(rows));
        in_range = std::move(out_range);
    }
    return compose_formulas(net, snaps);
}

namespace {

// Fits one edge to scattered (input, target) pairs. Inputs are normalized by
// their own min/max so the lattice applies unchanged, and at most
// kSnapSamples quantile-spaced points (in input order) are kept, which caps
// fit cost and weights dense input regions proportionally.
SymbolicTerm snap_pairs(std::vector<std::pair<double, double>> pts) {
    if (pts.empty()) throw std::invalid_argument("snap_pairs: no samples");
    std::sort(pts.begin(), pts.end());
    const double lo = pts.front().first;
    const double hi = pts.back().first;
    const double mid = 0.5 * (lo + hi);
    double half = 0.5 * (hi - lo);
    if (half < 1e-9) half = 0.5;

    const std::size_t n = pts.size();
    const std::size_t m = std::min(static_cast<std::size_t>(kSnapSamples), n);
    SampledEdge smp;
    smp.x.reserve(m);
    smp.y.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t idx = m == 1 ? 0 : j * (n - 1) / (m - 1);
        smp.x.push_back((pts[idx].first - mid) / half);
        smp.y.push_back(pts[idx].second);
    }
    smp.finalize_stats();
    return snap_sampled(smp, mid, half);
}

// Gaussian elimination with partial pivoting; near-singular pivots yield a
// zero coefficient instead of blowing up, which keeps the refit deterministic
// when a basis column is constant or duplicated.
std::vector<double> solve_normal_equations(std::vector<std::vector<double>> A,
                                           std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        }
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        if (std::abs(A[col][col]) < 1e-12) continue;
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t c = r + 1; c < n; ++c) s -= A[r][c] * x[c];
        x[r] = std::abs(A[r][r]) < 1e-12 ? 0.0 : s / A[r][r];
    }
    return x;
}

// Weighted joint least squares over one layer's outer coefficients: for each
// output unit, solves min sum_t w_t * (sum_i c_i * f_i(a_i*u_i + b_i) + D -
// target)^2 with the families and inner maps held fixed, then spreads the
// intercept D evenly over the per-edge d's (the composed sum is what
// matters). Per-edge fits minimize each term's own error; this pass minimizes
// the error of the sum, which is what the composed formulas actually emit. A
// small ridge on the c's (relative to the Gram diagonal, intercept excluded)
// keeps the system well conditioned: boundary-weighted rows are nearly
// collinear in basis space, and without it the near-null directions blow the
// coefficients up to +/-60 with massive cancellation between terms.
void refit_outer_weighted(std::vector<std::vector<SymbolicTerm>>& layer_terms,
                          const std::vector<std::vector<double>>& inputs,
                          const std::vector<std::vector<double>>& targets,
                          const std::vector<double>& weights) {
    constexpr double kRidgeRel = 1e-3;
    const std::size_t n_rows = inputs.size();
    for (std::size_t o = 0; o < layer_terms.size(); ++o) {
        auto& terms = layer_terms[o];
        const std::size_t in_dim = terms.size();
        std::vector<std::vector<double>> A(in_dim + 1,
                                           std::vector<double>(in_dim + 1, 0.0));
        std::vector<double> b(in_dim + 1, 0.0);
        std::vector<double> g(in_dim + 1, 1.0);
        for (std::size_t t = 0; t < n_rows; ++t) {
            for (std::size_t i = 0; i < in_dim; ++i) {
                const SymbolicTerm& tm = terms[i];
                g[i] = tm.family == Family::zero
                           ? 0.0
                           : family_eval(tm.family, tm.a * inputs[t][i] + tm.b);
            }
            g[in_dim] = 1.0;
            const double w = weights[t];
            for (std::size_t r = 0; r <= in_dim; ++r) {
                for (std::size_t c = 0; c <= in_dim; ++c) A[r][c] += w * g[r] * g[c];
                b[r] += w * g[r] * targets[t][o];
            }
        }
        double diag_mean = 0.0;
        for (std::size_t i = 0; i < in_dim; ++i) diag_mean += A[i][i];
        diag_mean /= static_cast<double>(in_dim);
        for (std::size_t i = 0; i < in_dim; ++i) A[i][i] += kRidgeRel * diag_mean;
        const std::vector<double> beta = solve_normal_equations(std::move(A), std::move(b));
        const double d_share = beta[in_dim] / static_cast<double>(in_dim);
        for (std::size_t i = 0; i < in_dim; ++i) {
            terms[i].c = beta[i];
            terms[i].d = d_share;
        }
    }
}

// r2 of one term against scattered pairs, for honest reporting after the
// joint refit moved (c, d) off the per-edge optimum.
double term_r2_on_pairs(const SymbolicTerm& term,
                        const std::vector<std::pair<double, double>>& pts) {
    double mean_y = 0.0;
    for (const auto& p : pts) mean_y += p.second;
    mean_y /= static_cast<double>(pts.size());
    double sstot = 0.0;
    double ssres = 0.0;
    for (const auto& p : pts) {
        const double dy = p.second - mean_y;
        sstot += dy * dy;
        const double r = p.second - term_eval(term, p.first);
        ssres += r * r;
    }
    if (sstot <= 1e-300) return ssres <= 1e-18 ? 1.0 : 0.0;
    return 1.0 - ssres / sstot;
}

} // namespace

SymbolicModel extract_model(const KanNetwork& net,
                            const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return extract_model(net);
    const std::size_t in_dim =
        net.widths.empty() ? 0 : static_cast<std::size_t>(net.widths.front());
    for (const auto& r : rows) {
        if (r.size() != in_dim) {
            throw DimensionMismatchError(
                "extract_model: row width " + std::to_string(r.size()) +
                " does not match network input width " + std::to_string(in_dim));
        }
    }

    // Cascade fit: walk the layers in order, keeping both the exact
    // activations (true_in) and the composed symbolic approximations (sym_in)
    // for every row. Each edge is fitted on (sym input, true response) pairs.
    std::vector<std::vector<double>> true_in = rows;
    std::vector<std::vector<double>> sym_in = rows;

    std::vector<std::vector<std::vector<SymbolicTerm>>> snaps;
    snaps.reserve(net.layers.size());
    for (const KanLayer& layer : net.layers) {
        std::vector<std::vector<SymbolicTerm>> layer_snaps(
            static_cast<std::size_t>(layer.out_dim));
        for (int o = 0; o < layer.out_dim; ++o) {
            auto& row_snaps = layer_snaps[static_cast<std::size_t>(o)];
            row_snaps.reserve(static_cast<std::size_t>(layer.in_dim));
            for (int i = 0; i < layer.in_dim; ++i) {
                std::vector<std::pair<double, double>> pts;
                pts.reserve(true_in.size());
                for (std::size_t t = 0; t < true_in.size(); ++t) {
                    pts.emplace_back(
                        sym_in[t][static_cast<std::size_t>(i)],
                        edge_eval(layer.edge(o, i), layer.grid,
                                  true_in[t][static_cast<std::size_t>(i)]));
                }
                row_snaps.push_back(snap_pairs(std::move(pts)));
            }
        }

        std::vector<std::vector<double>> true_next(true_in.size());
        for (std::size_t t = 0; t < true_in.size(); ++t) {
            true_next[t] = layer_forward(layer, true_in[t]);
        }

        const bool last = snaps.size() + 1 == net.layers.size();
        if (last) {
            // Per-edge fits minimize each term's own error, but the decision
            // only sees the summed logits, so re-solve the outer (c, d)
            // jointly against the true outputs. Rows near the full model's
            // decision boundary carry the weight; otherwise the tail of very
            // confident logits dominates the least squares and the boundary
            // drifts.
            std::vector<double> w(true_in.size(), 1.0);
            if (layer.out_dim == 2) {
                for (std::size_t t = 0; t < true_in.size(); ++t) {
                    const double diff = true_next[t][1] - true_next[t][0];
                    w[t] = 1.0 / (1.0 + diff * diff);
                }
            }
            refit_outer_weighted(layer_snaps, sym_in, true_next, w);

            // the joint solution trades per-edge r2 for summed accuracy;
            // re-score each term honestly on its own pairs
            for (int o = 0; o < layer.out_dim; ++o) {
                for (int i = 0; i < layer.in_dim; ++i) {
                    std::vector<std::pair<double, double>> pts;
                    pts.reserve(true_in.size());
                    for (std::size_t t = 0; t < true_in.size(); ++t) {
                        pts.emplace_back(
                            sym_in[t][static_cast<std::size_t>(i)],
                            edge_eval(layer.edge(o, i), layer.grid,
                                      true_in[t][static_cast<std::size_t>(i)]));
                    }
                    auto& term = layer_snaps[static_cast<std::size_t>(o)]
                                            [static_cast<std::size_t>(i)];
                    term.r2 = term_r2_on_pairs(term, pts);
                }
            }
        }

        std::vector<std::vector<double>> sym_next(true_in.size());
        for (std::size_t t = 0; t < true_in.size(); ++t) {
            sym_next[t].assign(static_cast<std::size_t>(layer.out_dim), 0.0);
            for (int o = 0; o < layer.out_dim; ++o) {
                double acc = 0.0;
                for (int i = 0; i < layer.in_dim; ++i) {
                    acc += term_eval(layer_snaps[static_cast<std::size_t>(o)]
                                                [static_cast<std::size_t>(i)],
                                     sym_in[t][static_cast<std::size_t>(i)]);
                }
                sym_next[t][static_cast<std::size_t>(o)] = acc;
            }
        }
        true_in = std::move(true_next);
        sym_in = std::move(sym_next);
        snaps.push_back(std::move(layer_snaps));
    }
    return compose_formulas(net, snaps);
}

int symbolic_predict(const SymbolicModel& sm, const std::vector<double>& x) {
    if (sm.widths.empty() ||
        x.size() != static_cast<std::size_t>(sm.widths.front())) {
        throw DimensionMismatchError("symbolic_predict: expected " +
                                     std::to_string(sm.widths.empty() ? 0 : sm.widths.front()) +
                                     " inputs, got " + std::to_string(x.size()));
    }
    if (sm.outputs.size() != 2) {
        throw DimensionMismatchError("symbolic_predict needs a 2-logit model, got " +
                                     std::to_string(sm.outputs.size()) + " outputs");
    }
    const double l1 = eval_expr(*sm.outputs[0], x);
    const double l2 = eval_expr(*sm.outputs[1], x);
    if (!std::isfinite(l1) || !std::isfinite(l2)) {
        throw NonFiniteEvalError("symbolic formula evaluated to a non-finite value");
    }
    return label_from_logits(l1, l2);
}

std::string format_formulas_text(const SymbolicModel& sm) {
    if (sm.outputs.size() != 2) {
        throw DimensionMismatchError("formula export needs a 2-logit model");
    }
    std::string out;
    out += "L1 = " + render_expr(*sm.outputs[0]) + "\n";
    out += "L2 = " + render_expr(*sm.outputs[1]) + "\n";
    out += "predict = 1 if L2 > L1 else 0\n";
    return out;
}

namespace {

std::string hex_u64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json term_to_json(const SymbolicTerm& t) {
    return json{{"family", family_name(t.family)}, {"a", t.a}, {"b", t.b},
                {"c", t.c},                         {"d", t.d}, {"r2", t.r2}};
}

json expr_to_json(const Expr& e) {
    switch (e.kind) {
    case Expr::Kind::constant:
        return json{{"kind", "const"}, {"value", e.value}};
    case Expr::Kind::variable:
        return json{{"kind", "var"}, {"index", e.var_index + 1}};
    case Expr::Kind::term: {
        json j = term_to_json(e.term);
        j["kind"] = "term";
        j.erase("r2");
        j["child"] = expr_to_json(*e.child);
        return j;
    }
    case Expr::Kind::sum: {
        json children = json::array();
        for (const ExprPtr& ch : e.children) children.push_back(expr_to_json(*ch));
        return json{{"kind", "sum"}, {"children", children}};
    }
    }
    throw std::invalid_argument("unknown expression kind");
}

} // namespace

std::string symbolic_model_to_json_text(const SymbolicModel& sm) {
    json layers = json::array();
    for (const auto& layer : sm.terms) {
        json rows = json::array();
        for (const auto& row : layer) {
            json terms = json::array();
            for (const SymbolicTerm& t : row) terms.push_back(term_to_json(t));
            rows.push_back(terms);
        }
        layers.push_back(rows);
    }
    json outputs = json::array();
    for (const ExprPtr& o : sm.outputs) outputs.push_back(expr_to_json(*o));

    json doc = {
        {"format_version", 1},
        {"source_fingerprint", hex_u64(sm.source_fingerprint)},
        {"widths", sm.widths},
        {"edge_terms", layers},
        {"outputs", outputs},
    };
    return doc.dump(2);
}

namespace {

struct SplitScore {
    double full_accuracy = 0.0;
    double sym_accuracy = 0.0;
    double full_balanced = 0.0;
    double sym_balanced = 0.0;
    double agreement = 0.0;
};

SplitScore score_split(const KanNetwork& net, const SymbolicModel& sm,
                       const std::vector<LabeledSample>& samples) {
    const Standardizer& st = *net.meta.standardizer;
    std::int64_t full_hits = 0, sym_hits = 0, agree = 0;
    std::int64_t full_class_hits[2] = {0, 0};
    std::int64_t sym_class_hits[2] = {0, 0};
    std::int64_t class_totals[2] = {0, 0};
    for (const LabeledSample& s : samples) {
        const auto feats = s.features();
        const std::vector<double> u = st.transform(feats);
        const int full = classify(net, u);
        const int sym = symbolic_predict(sm, u);
        class_totals[s.label] += 1;
        if (full == s.label) {
            full_hits += 1;
            full_class_hits[s.label] += 1;
        }
        if (sym == s.label) {
            sym_hits += 1;
            sym_class_hits[s.label] += 1;
        }
        if (full == sym) agree += 1;
    }

    auto balanced = [&](const std::int64_t hits[2]) {
        double sum = 0.0;
        int present = 0;
        for (int c = 0; c < 2; ++c) {
            if (class_totals[c] > 0) {
                sum += static_cast<double>(hits[c]) / static_cast<double>(class_totals[c]);
                present += 1;
            }
        }
        return present > 0 ? sum / present : 0.0;
    };

    const auto n = static_cast<double>(samples.size());
    SplitScore sc;
    sc.full_accuracy = static_cast<double>(full_hits) / n;
    sc.sym_accuracy = static_cast<double>(sym_hits) / n;
    sc.full_balanced = balanced(full_class_hits);
    sc.sym_balanced = balanced(sym_class_hits);
    sc.agreement = static_cast<double>(agree) / n;
    return sc;
}

} // namespace

FidelityReport fidelity_report(const KanNetwork& net, const SymbolicModel& sm,
                               const std::vector<LabeledSample>& train,
                               const std::vector<LabeledSample>& test) {
    if (train.empty() || test.empty()) {
        throw std::invalid_argument("fidelity_report: both splits must be non-empty");
    }
    if (!net.meta.standardizer) {
        throw ModelError("fidelity_report: model carries no standardizer");
    }

    const SplitScore tr = score_split(net, sm, train);
    const SplitScore te = score_split(net, sm, test);

    FidelityReport r;
    r.full_train_accuracy = tr.full_accuracy;
    r.full_test_accuracy = te.full_accuracy;
    r.sym_train_accuracy = tr.sym_accuracy;
    r.sym_test_accuracy = te.sym_accuracy;
    r.full_train_balanced_accuracy = tr.full_balanced;
    r.full_test_balanced_accuracy = te.full_balanced;
    r.sym_train_balanced_accuracy = tr.sym_balanced;
    r.sym_test_balanced_accuracy = te.sym_balanced;
    r.agreement_train = tr.agreement;
    r.agreement_test = te.agreement;

    double min_r2 = std::numeric_limits<double>::infinity();
    double sum_r2 = 0.0;
    std::size_t n_edges = 0;
    for (const auto& layer : sm.terms) {
        for (const auto& row : layer) {
            for (const SymbolicTerm& t : row) {
                min_r2 = std::min(min_r2, t.r2);
                sum_r2 += t.r2;
                n_edges += 1;
            }
        }
    }
    r.min_edge_r2 = n_edges > 0 ? min_r2 : 0.0;
    r.mean_edge_r2 = n_edges > 0 ? sum_r2 / static_cast<double>(n_edges) : 0.0;
    r.overfit_warning =
        std::abs(r.sym_train_accuracy - r.sym_test_accuracy) > 0.05;
    return r;
}

std::string fidelity_to_json_text(const FidelityReport& r) {
    json doc = {
        {"full_model", json{{"train_accuracy", r.full_train_accuracy},
                            {"test_accuracy", r.full_test_accuracy},
                            {"train_balanced_accuracy", r.full_train_balanced_accuracy},
                            {"test_balanced_accuracy", r.full_test_balanced_accuracy}}},
        {"symbolic", json{{"train_accuracy", r.sym_train_accuracy},
                          {"test_accuracy", r.sym_test_accuracy},
                          {"train_balanced_accuracy", r.sym_train_balanced_accuracy},
                          {"test_balanced_accuracy", r.sym_test_balanced_accuracy}}},
        {"agreement", json{{"train", r.agreement_train}, {"test", r.agreement_test}}},
        {"edge_r2", json{{"min", r.min_edge_r2}, {"mean", r.mean_edge_r2}}},
        {"overfit_warning", r.overfit_warning},
    };
    return doc.dump(2);
}

} // namespace kan
