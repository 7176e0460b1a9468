#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "kan/errors.hpp"
#include "kan/network.hpp"
#include "kan/rng.hpp"
#include "kan/spline.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

using namespace kan;

namespace {

KanNetwork zeroed(std::vector<int> widths) {
    KanNetwork net = init_network(widths, InitOptions{}, 0);
    for (auto& layer : net.layers) {
        for (auto& e : layer.edges) {
            std::fill(e.coeffs.begin(), e.coeffs.end(), 0.0);
            e.w_spline = 0.0;
            e.w_base = 0.0;
        }
    }
    return net;
}

} // namespace

TEST_CASE("edge_eval basics") {
    const SplineGrid g = make_grid(3, 3, -1.0, 1.0);
    EdgeActivation e;
    e.coeffs.assign(static_cast<std::size_t>(g.basis_count()), 0.4);

    SUBCASE("both scales zero give zero everywhere") {
        e.w_base = 0.0;
        e.w_spline = 0.0;
        for (double x : {-2.0, -1.0, 0.0, 0.3, 1.0, 9.0}) {
            CHECK(edge_eval(e, g, x) == 0.0);
        }
    }

    SUBCASE("base function vanishes at zero") {
        e.w_base = 1.0;
        e.w_spline = 0.0;
        CHECK(edge_eval(e, g, 0.0) == 0.0);
    }

    SUBCASE("base term is the sigmoid-weighted linear unit") {
        e.w_base = 1.0;
        e.w_spline = 0.0;
        Rng rng(5);
        for (int t = 0; t < 50; ++t) {
            const double x = rng.uniform(-4.0, 4.0);
            CHECK(edge_eval(e, g, x) == doctest::Approx(oracle::silu(x)).epsilon(1e-15));
        }
    }
}

TEST_CASE("edge fitted to sin evaluates like sin") {
    const SplineGrid g = make_grid(3, 3, -1.0, 1.0);
    std::vector<double> xs, ys;
    for (int i = 0; i < 200; ++i) {
        const double x = -1.0 + 2.0 * i / 199.0;
        xs.push_back(x);
        ys.push_back(std::sin(x));
    }
    EdgeActivation e;
    e.coeffs = fit_coefficients(g, xs, ys);
    e.w_spline = 1.0;
    e.w_base = 0.0;
    CHECK(edge_eval(e, g, 0.5) == doctest::Approx(std::sin(0.5)).epsilon(1e-3));
}

TEST_CASE("edge_eval clamps the spline term but not the base term") {
    const SplineGrid g = make_grid(3, 3, -1.0, 1.0);
    KanNetwork net = init_network({1, 1}, InitOptions{}, 3);
    EdgeActivation e = net.layers[0].edge(0, 0);

    // Outside the grid the spline contribution freezes at the boundary value
    // while the silu residual keeps moving.
    const double boundary_spline = edge_eval(e, g, 1.0) - e.w_base * oracle::silu(1.0);
    for (double x : {1.5, 2.0, 7.0}) {
        const double expect = e.w_base * oracle::silu(x) + boundary_spline;
        CHECK(edge_eval(e, g, x) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("layer_forward equals the naive edge loop") {
    SUBCASE("zero-weighted edges give the zero vector") {
        const KanNetwork net = zeroed({3, 2});
        const std::vector<double> y = layer_forward(net.layers[0], std::vector<double>{0.3, -0.2, 0.9});
        CHECK(y == std::vector<double>{0.0, 0.0});
    }

    SUBCASE("1x1 layer is edge_eval") {
        const KanNetwork net = init_network({1, 1}, InitOptions{}, 9);
        const KanLayer& layer = net.layers[0];
        for (double x : {-1.0, -0.25, 0.0, 0.6, 1.0}) {
            const std::vector<double> y = layer_forward(layer, std::vector<double>{x});
            REQUIRE(y.size() == 1);
            CHECK(y[0] == edge_eval(layer.edge(0, 0), layer.grid, x));
        }
    }

    SUBCASE("2x3 layer, seed 7, against the double loop") {
        const KanNetwork net = init_network({3, 2}, InitOptions{}, 7);
        const KanLayer& layer = net.layers[0];
        const oracle::NaiveBasis nb(layer.grid);
        Rng rng(70);
        for (int t = 0; t < 25; ++t) {
            const std::vector<double> x = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                                           rng.uniform(-1.5, 1.5)};
            const std::vector<double> y = layer_forward(layer, x);
            REQUIRE(y.size() == 2);
            for (int o = 0; o < 2; ++o) {
                double want = 0.0;
                for (int i = 0; i < 3; ++i) {
                    want += oracle::edge_value(layer.edge(o, i), nb, x[static_cast<std::size_t>(i)]);
                }
                CHECK(y[static_cast<std::size_t>(o)] == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }

    SUBCASE("wrong input length is rejected") {
        const KanNetwork net = init_network({3, 2}, InitOptions{}, 7);
        CHECK_THROWS_AS(layer_forward(net.layers[0], std::vector<double>{1.0, 2.0}),
                        DimensionMismatchError);
    }
}

TEST_CASE("network_forward composes layers") {
    SUBCASE("single-layer network is layer_forward") {
        const KanNetwork net = init_network({4, 2}, InitOptions{}, 21);
        const std::vector<double> x = {0.1, 0.2, -0.3, 0.7};
        CHECK(network_forward(net, x) == layer_forward(net.layers[0], x));
    }

    SUBCASE("all-zero default network returns zero logits") {
        const KanNetwork net = zeroed({4, 5, 2});
        const std::vector<double> y = network_forward(net, std::vector<double>{0.4, -0.9, 0.1, 0.0});
        CHECK(y == std::vector<double>{0.0, 0.0});
    }

    SUBCASE("seed-42 default network matches the independent evaluator") {
        const KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 42);
        const std::vector<double> x = {0.1, -0.2, 0.3, 0.0};
        const std::vector<double> got = network_forward(net, x);
        const std::vector<double> want = oracle::forward(net, x);
        REQUIRE(got.size() == 2);
        CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-12));
        CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-12));
    }

    SUBCASE("random shapes and inputs match the independent evaluator") {
        Rng rng(77);
        const std::vector<std::vector<int>> shapes = {{2, 3, 2}, {4, 5, 2}, {1, 4, 3, 2}, {3, 2}};
        for (std::size_t s = 0; s < shapes.size(); ++s) {
            const KanNetwork net = init_network(shapes[s], InitOptions{}, 100 + s);
            for (int t = 0; t < 10; ++t) {
                std::vector<double> x(static_cast<std::size_t>(net.input_dim()));
                for (double& v : x) v = rng.uniform(-2.0, 2.0);
                const std::vector<double> got = network_forward(net, x);
                const std::vector<double> want = oracle::forward(net, x);
                REQUIRE(got.size() == want.size());
                for (std::size_t i = 0; i < got.size(); ++i) {
                    CHECK(oracle::rel_err(got[i], want[i], 1e-12) <= 1e-12);
                }
            }
        }
    }

    SUBCASE("wrong input length is rejected") {
        const KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 1);
        CHECK_THROWS_AS(network_forward(net, std::vector<double>{1.0}), DimensionMismatchError);
    }
}

TEST_CASE("decision rule: 1 iff the attack logit strictly wins") {
    CHECK(label_from_logits(0.3, 0.9) == 1);
    CHECK(label_from_logits(0.9, 0.3) == 0);
    CHECK(label_from_logits(0.5, 0.5) == 0);

    const KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 42);
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const std::vector<double> logits = network_forward(net, x);
        CHECK(classify(net, x) == label_from_logits(logits[0], logits[1]));
    }
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 42);
    const GradientSet g =
        backward(net, std::vector<double>{0.1, 0.2, 0.3, 0.4}, std::vector<double>{0.0, 0.0});
    for (double v : oracle::flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("backward: 1x1 spline-only coefficients differentiate to basis values") {
    KanNetwork net = init_network({1, 1}, InitOptions{}, 4);
    EdgeActivation& e = net.layers[0].edge(0, 0);
    e.w_base = 0.0;
    e.w_spline = 1.0;

    for (double x : {-0.8, -0.1, 0.0, 0.35, 1.0}) {
        const GradientSet g = backward(net, std::vector<double>{x}, std::vector<double>{1.0});
        const std::vector<double> b = basis_eval(net.layers[0].grid, x);
        REQUIRE(g.layers.size() == 1);
        const EdgeGradient& eg = g.layers[0].edges[0];
        REQUIRE(eg.coeffs.size() == b.size());
        for (std::size_t i = 0; i < b.size(); ++i) CHECK(eg.coeffs[i] == b[i]);
    }
}

TEST_CASE("backward matches central differences on the default network") {
    KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 42);
    Rng rng(4242);
    for (int t = 0; t < 3; ++t) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        const std::vector<double> upstream = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

        const std::vector<double> analytic = oracle::flatten(backward(net, x, upstream));
        const std::vector<double> numeric = oracle::fd_gradient(net, x, upstream);
        REQUIRE(analytic.size() == numeric.size());
        REQUIRE(analytic.size() == net.parameter_count());
        double worst = 0.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            worst = std::max(worst, oracle::tol_excess(analytic[i], numeric[i], 1e-4, 1e-7));
        }
        CHECK(worst <= 1.0);
    }
}

TEST_CASE("backward matches central differences on small random networks") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        KanNetwork net = init_network({2, 3, 2}, InitOptions{}, seed);
        Rng rng(900 + seed);
        std::vector<double> x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        std::vector<double> upstream = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

        const std::vector<double> analytic = oracle::flatten(backward(net, x, upstream));
        const std::vector<double> numeric = oracle::fd_gradient(net, x, upstream);
        REQUIRE(analytic.size() == numeric.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            worst = std::max(worst, oracle::tol_excess(analytic[i], numeric[i], 1e-4, 1e-7));
        }
        CAPTURE(seed);
        CHECK(worst <= 1.0);
    }
}

TEST_CASE("backward validates shapes") {
    KanNetwork net = init_network({4, 5, 2}, InitOptions{}, 1);
    CHECK_THROWS_AS(backward(net, std::vector<double>{1.0}, std::vector<double>{1.0, 0.0}),
                    DimensionMismatchError);
    CHECK_THROWS_AS(
        backward(net, std::vector<double>{1.0, 0.0, 0.0, 0.0}, std::vector<double>{1.0}),
        DimensionMismatchError);
}

TEST_CASE("backward_accumulate sums scaled per-sample gradients") {
    KanNetwork net = init_network({2, 3, 2}, InitOptions{}, 8);
    const std::vector<double> xa = {0.2, -0.4};
    const std::vector<double> xb = {-0.7, 0.1};
    const std::vector<double> up = {0.3, -0.6};

    GradientSet acc = make_zero_gradients(net);
    backward_accumulate(net, xa, up, 0.5, acc);
    backward_accumulate(net, xb, up, 2.0, acc);

    GradientSet manual = backward(net, xa, up);
    manual.scale(0.5);
    manual.accumulate(backward(net, xb, up), 2.0);

    const std::vector<double> got = oracle::flatten(acc);
    const std::vector<double> want = oracle::flatten(manual);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("spline-only output layer is linear in its coefficients") {
    // Single layer: doubling every coefficient doubles the logits exactly.
    KanNetwork single = init_network({4, 2}, InitOptions{}, 15);
    for (auto& e : single.layers[0].edges) e.w_base = 0.0;
    const std::vector<double> x = {0.3, -0.8, 0.5, 0.1};
    const std::vector<double> before = network_forward(single, x);
    for (auto& e : single.layers[0].edges) {
        for (double& c : e.coeffs) c *= 2.0;
    }
    const std::vector<double> after = network_forward(single, x);
    CHECK(after[0] == 2.0 * before[0]);
    CHECK(after[1] == 2.0 * before[1]);

    // Deep network: the same holds for the final layer's coefficients, since
    // nothing downstream re-enters a spline.
    KanNetwork deep = init_network({4, 5, 2}, InitOptions{}, 16);
    for (auto& e : deep.layers.back().edges) e.w_base = 0.0;
    const std::vector<double> b2 = network_forward(deep, x);
    for (auto& e : deep.layers.back().edges) {
        for (double& c : e.coeffs) c *= 2.0;
        e.w_spline *= 1.0;
    }
    const std::vector<double> a2 = network_forward(deep, x);
    CHECK(a2[0] == 2.0 * b2[0]);
    CHECK(a2[1] == 2.0 * b2[1]);
}

TEST_CASE("init_network is deterministic and shape-checked") {
    const KanNetwork a = init_network({4, 5, 2}, InitOptions{}, 33);
    const KanNetwork b = init_network({4, 5, 2}, InitOptions{}, 33);
    KanNetwork a2 = a;
    const std::vector<double*> pa = oracle::parameter_refs(a2);
    KanNetwork b2 = b;
    const std::vector<double*> pb = oracle::parameter_refs(b2);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);

    KanNetwork c = init_network({4, 5, 2}, InitOptions{}, 34);
    const std::vector<double*> pc = oracle::parameter_refs(c);
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) any_diff = any_diff || (*pa[i] != *pc[i]);
    CHECK(any_diff);

    // (4*5 + 5*2) edges, each with (3+3) coefficients plus two scales.
    CHECK(a.parameter_count() == 240);
    CHECK(a.input_dim() == 4);
    CHECK(a.output_dim() == 2);
    for (const auto& layer : a.layers) {
        for (const auto& e : layer.edges) {
            CHECK(e.w_spline == 1.0);
            CHECK(e.w_base == 1.0);
        }
    }

    CHECK_THROWS_AS(init_network({4}, InitOptions{}, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_network({4, 0, 2}, InitOptions{}, 0), std::invalid_argument);
    CHECK_THROWS_AS(init_network({}, InitOptions{}, 0), std::invalid_argument);
}

TEST_CASE("network fingerprints track parameter changes") {
    const KanNetwork a = init_network({4, 5, 2}, InitOptions{}, 33);
    const KanNetwork b = init_network({4, 5, 2}, InitOptions{}, 33);
    CHECK(network_fingerprint(a) == network_fingerprint(b));

    KanNetwork c = a;
    c.layers[0].edge(0, 0).coeffs[0] += 1e-9;
    CHECK(network_fingerprint(c) != network_fingerprint(a));
}
