#ifndef KAN_SYMBOLIC_HPP
#define KAN_SYMBOLIC_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kan/dataset.hpp"
#include "kan/network.hpp"

namespace kan {

// Candidate function library, ordered simple-to-complex. Ties on fit quality
// resolve to the earlier family.
enum class Family {
    zero,
    linear,
    quadratic,
    cubic,
    quartic,
    reciprocal,
    sqrt_abs,
    exponential,
    log_abs,
    absolute,
    sine,
    hyperbolic_tangent,
    logistic,
    gaussian,
    arctangent,
};

constexpr int kFamilyCount = 15;

const char* family_name(Family f);                 // "sqrt-abs", "log-abs", ...
Family parse_family(const std::string& name);      // throws std::invalid_argument
double family_eval(Family f, double t);
const std::vector<Family>& all_families();

// One snapped edge: c * f(a * x + b) + d, with the r2 achieved against the
// sampled activation.
struct SymbolicTerm {
    Family family = Family::zero;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double r2 = 1.0;
};

double term_eval(const SymbolicTerm& term, double x);

// Snaps one trained edge function to the best library term. Samples the edge
// at 201 uniform points on [-1, 1], grid-searches the inner (a, b) over a
// fixed lattice (a in +/-{0.25, 0.5, 1, 2, 4} x {1, 1.5}, b in {-1, -0.5, 0,
// 0.5, 1}), solves the outer (c, d) in closed form, then refines the best
// cell with 2 rounds of halved-step neighborhood search. Families with a pole
// inside the sampling window (reciprocal, log-abs) are rejected for that
// candidate. The zero family is always scored, so snapping cannot fail.
SymbolicTerm snap_edge(const EdgeActivation& edge, const SplineGrid& grid);

// Same fit over an arbitrary window [lo, hi]: the search runs in normalized
// coordinates (so the lattice keeps its meaning) and the returned term is
// re-expressed in the original coordinates. Hidden-layer edges see sums of
// activations rather than standardized inputs, so extraction snaps them over
// their actual input ranges instead of the default window.
SymbolicTerm snap_edge_window(const EdgeActivation& edge, const SplineGrid& grid,
                              double lo, double hi);

// Sampled min/max of the edge function over [lo, hi] (201 uniform points).
std::pair<double, double> edge_value_range(const EdgeActivation& edge,
                                           const SplineGrid& grid, double lo,
                                           double hi);

// Expression tree for the composed formulas. Immutable once built.
struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { constant, variable, term, sum };

    Kind kind = Kind::constant;
    double value = 0.0;                  // constant
    int var_index = 0;                   // variable, 0-based
    SymbolicTerm term;                   // term
    ExprPtr child;                       // term
    std::vector<ExprPtr> children;       // sum
};

// Constructors fold constants: a zero-family or c == 0 term collapses to its
// offset, terms of constant children evaluate immediately, and sums merge
// constant parts and drop exact zeros.
ExprPtr make_const(double v);
ExprPtr make_var(int index);
ExprPtr make_term(const SymbolicTerm& term, ExprPtr child);
ExprPtr make_sum(std::vector<ExprPtr> parts);

// Total evaluation; may return non-finite values (callers decide how to
// report those).
double eval_expr(const Expr& e, const std::vector<double>& x);

// Infix rendering using shortest round-trip number formatting. The output is
// accepted by eval_formula_text below.
std::string render_expr(const Expr& e);

// Recursive-descent evaluator for the rendered grammar: + - * / ^ (right
// assoc), unary minus, sin/tanh/exp/log/abs/sqrt/atan/logistic/gauss, x1..xn.
// Throws std::invalid_argument on malformed text.
double eval_formula_text(const std::string& text, const std::vector<double>& x);

struct SymbolicModel {
    std::vector<int> widths;
    // terms[layer][out][in], congruent with the source network's edges.
    std::vector<std::vector<std::vector<SymbolicTerm>>> terms;
    std::vector<ExprPtr> outputs; // one composed tree per network output
    std::uint64_t source_fingerprint = 0;
    std::optional<Standardizer> standardizer;

    const ExprPtr& logit_normal() const { return outputs.at(0); }
    const ExprPtr& logit_attack() const { return outputs.at(1); }
};

// Substitutes every edge with its snapped term and sums along the network
// structure. Throws DimensionMismatchError if the term matrix does not match
// the network shape.
SymbolicModel compose_formulas(const KanNetwork& net,
                               const std::vector<std::vector<std::vector<SymbolicTerm>>>& snaps);

// Snaps every edge, then compose_formulas. First-layer edges are fitted on
// the standardized input window [-1, 1]; hidden-layer edges on per-unit value
// ranges propagated through the network (sum of incoming edges' sampled
// min/max), since their inputs routinely leave [-1, 1].
SymbolicModel extract_model(const KanNetwork& net);

// Data-driven extraction. Each edge is fitted on scattered pairs taken from
// the given standardized rows: the input is what the composed symbolic model
// will actually feed that edge (the upstream terms' outputs), the target is
// the true edge response, so downstream terms absorb upstream approximation
// error instead of compounding it. Inputs are subsampled to at most 201
// quantile-spaced points, which weights dense regions proportionally. The
// final layer's outer coefficients are then re-solved jointly per logit
// against the full model's outputs, weighted toward the decision boundary,
// since the classifier only sees the summed terms. Falls back to the
// data-free variant when rows is empty. Throws DimensionMismatchError if a
// row width does not match the network input.
SymbolicModel extract_model(const KanNetwork& net,
                            const std::vector<std::vector<double>>& rows);

// Indicator classifier over the composed trees: 1 iff L2 > L1 (tie -> 0),
// identical to the full model's decision rule. `x` must already be
// standardized. Throws NonFiniteEvalError if a tree evaluates to a non-finite
// value (a guarded singularity was hit).
int symbolic_predict(const SymbolicModel& sm, const std::vector<double>& x);

// Plain-text export: "L1 = ...", "L2 = ...", then the decision rule line.
std::string format_formulas_text(const SymbolicModel& sm);

// Versioned machine-readable document: term matrix plus composed trees.
std::string symbolic_model_to_json_text(const SymbolicModel& sm);

struct FidelityReport {
    double full_train_accuracy = 0.0;
    double full_test_accuracy = 0.0;
    double sym_train_accuracy = 0.0;
    double sym_test_accuracy = 0.0;
    double full_train_balanced_accuracy = 0.0;
    double full_test_balanced_accuracy = 0.0;
    double sym_train_balanced_accuracy = 0.0;
    double sym_test_balanced_accuracy = 0.0;
    double agreement_train = 0.0; // fraction of samples with identical labels
    double agreement_test = 0.0;
    double min_edge_r2 = 0.0;
    double mean_edge_r2 = 0.0;
    bool overfit_warning = false; // symbolic |train - test| accuracy gap > 5 pp
};

// Scores the full and symbolic classifiers on both splits. Inputs are raw
// samples; both classifiers share the model's embedded standardizer. Throws
// std::invalid_argument on empty splits.
FidelityReport fidelity_report(const KanNetwork& net, const SymbolicModel& sm,
                               const std::vector<LabeledSample>& train,
                               const std::vector<LabeledSample>& test);

std::string fidelity_to_json_text(const FidelityReport& report);

} // namespace kan

#endif
