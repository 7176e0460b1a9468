// Acceptance gate: nine end-to-end criteria, one TEST_CASE each. Every case
// prints exactly one "[PASS] criterion N: ..." or "[FAIL] criterion N: ..."
// line with the measured numbers, and the doctest assertion mirrors that
// verdict. Tolerances and budgets are pinned in code next to each criterion.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "json.hpp"

#include "kan/dataset.hpp"
#include "kan/metrics.hpp"
#include "kan/model_io.hpp"
#include "kan/network.hpp"
#include "kan/rng.hpp"
#include "kan/spline.hpp"
#include "kan/symbolic.hpp"
#include "kan/train.hpp"
#include "oracles.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

using namespace kan;
namespace fs = std::filesystem;

namespace {

const std::string kCli = KANDET_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
    const int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t file_hash(const fs::path& path) {
    const std::string bytes = read_file(path);
    return fnv1a(bytes.data(), bytes.size());
}

fs::path scratch_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() /
                     ("kan_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// The single human-readable verdict line per criterion.
void verdict(bool ok, int criterion, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion,
                detail.c_str());
    std::fflush(stdout);
    CHECK(ok);
}

std::string fmt(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Reference pipeline (criterion 5's run), shared by criteria 5-8. Built once
// per process; criteria that only consume it keep its build time out of
// their own budgets.
struct ReferenceRun {
    fs::path dir;
    fs::path data;
    fs::path model;
    fs::path report;
    double build_seconds = 0.0;
};

// Runs gen-data/train/eval with the pinned reference flags into `dir`.
void run_pipeline(const fs::path& dir) {
    fs::create_directories(dir);
    RunResult g = run("gen-data --out " + (dir / "data.csv").string() + " --seed 42");
    REQUIRE(g.exit_code == 0);
    RunResult t = run("train --data " + (dir / "data.csv").string() + " --out-model " +
                      (dir / "model.kan").string() + " --seed 42");
    REQUIRE(t.exit_code == 0);
    RunResult e = run("eval --data " + (dir / "data.csv").string() + " --model " +
                      (dir / "model.kan").string() + " --split test --report-out " +
                      (dir / "report.json").string());
    REQUIRE(e.exit_code == 0);
}

const ReferenceRun& reference_run() {
    static const ReferenceRun ref = [] {
        ReferenceRun r;
        const auto t0 = Clock::now();
        r.dir = scratch_dir() / "reference";
        run_pipeline(r.dir);
        r.data = r.dir / "data.csv";
        r.model = r.dir / "model.kan";
        r.report = r.dir / "report.json";
        r.build_seconds = seconds_since(t0);
        return r;
    }();
    return ref;
}

} // namespace

TEST_CASE("criterion 1: metric arithmetic reproduces the reference tables") {
    const auto t0 = Clock::now();

    // The published confusion percentages 92.9/7.1/14.7/85.3 applied to the
    // test-class sizes 2873 normal / 20187 attack give these counts.
    const EvalReport r = report_from_counts(2669, 204, 2968, 17219);

    auto near = [](double got, double want) { return std::abs(got - want) <= 0.005; };
    const bool metrics_ok = near(r.precision, 0.99) && near(r.recall, 0.85) &&
                            near(r.f1, 0.92) && near(r.balanced_accuracy, 0.89);
    const bool rates_ok = std::abs(r.tn_pct - 92.9) <= 0.05 &&
                          std::abs(r.fp_pct - 7.1) <= 0.05 &&
                          std::abs(r.fn_pct - 14.7) <= 0.05 &&
                          std::abs(r.tp_pct - 85.3) <= 0.05;
    const double secs = seconds_since(t0);
    const bool ok = metrics_ok && rates_ok && secs < 1.0;

    verdict(ok, 1,
            "precision " + fmt(r.precision, 4) + " recall " + fmt(r.recall, 4) +
                " f1 " + fmt(r.f1, 4) + " balanced accuracy " +
                fmt(r.balanced_accuracy, 4) + " (each +/-0.005 of 0.99/0.85/0.92/0.89), " +
                fmt(secs, 2) + " s");
}

TEST_CASE("criterion 2: analytic gradients match central finite differences") {
    const auto t0 = Clock::now();

    // Tolerance: |analytic - numeric| <= 1e-7 + 1e-4 * max(|analytic|,
    // |numeric|); an excess ratio of 1.0 sits exactly on that line.
    double max_excess = 0.0;
    const std::vector<std::vector<int>> shapes = {{2, 3, 2}, {4, 5, 2}};
    for (const auto& widths : shapes) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            InitOptions opts;
            KanNetwork net = init_network(widths, opts, seed);
            Rng rng(1000 + seed);
            for (int trial = 0; trial < 20; ++trial) {
                std::vector<double> x(static_cast<std::size_t>(widths.front()));
                for (double& v : x) v = rng.uniform(-1.0, 1.0);
                std::vector<double> upstream(static_cast<std::size_t>(widths.back()));
                for (double& v : upstream) v = rng.uniform(-1.0, 1.0);

                const std::vector<double> analytic = oracle::flatten(backward(net, x, upstream));
                const std::vector<double> numeric = oracle::fd_gradient(net, x, upstream, 1e-5);
                REQUIRE(analytic.size() == numeric.size());
                for (std::size_t i = 0; i < analytic.size(); ++i) {
                    max_excess = std::max(
                        max_excess, oracle::tol_excess(analytic[i], numeric[i], 1e-4, 1e-7));
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = max_excess <= 1.0 && secs < 30.0;

    verdict(ok, 2,
            "[2,3,2] and [4,5,2], seeds 0-9, 20 inputs each: worst error " +
                fmt(max_excess, 4) + "x the 1e-4 relative / 1e-7 absolute budget, " +
                fmt(secs, 2) + " s");
}

TEST_CASE("criterion 3: spline property suite holds") {
    const auto t0 = Clock::now();
    Rng rng(33);

    const std::vector<SplineGrid> grids = {
        make_grid(3, 3, -1.0, 1.0), // the reference model's grid
        make_grid(3, 8, -1.0, 1.0),
        make_grid(2, 5, -2.0, 2.0),
    };

    // Partition of unity at 1000 random points per grid.
    double worst_unity = 0.0;
    for (const SplineGrid& g : grids) {
        for (int i = 0; i < 1000; ++i) {
            const double x = rng.uniform(g.lo, g.hi);
            const std::vector<double> b = basis_eval(g, x);
            double sum = 0.0;
            for (double v : b) sum += v;
            worst_unity = std::max(worst_unity, std::abs(sum - 1.0));
        }
    }

    // Analytic derivative vs central differences, away from the knots where
    // finite differences would straddle a kink.
    double worst_deriv = 0.0;
    for (const SplineGrid& g : grids) {
        const double eps = 1e-5;
        int accepted = 0;
        while (accepted < 1000) {
            const double x = rng.uniform(g.lo + 2 * eps, g.hi - 2 * eps);
            const double offset = (x - g.lo) / g.step();
            if (std::abs(offset - std::round(offset)) * g.step() < 1e-3) continue;
            ++accepted;
            const std::vector<double> d = basis_derivative(g, x);
            const std::vector<double> lo_v = basis_eval(g, x - eps);
            const std::vector<double> hi_v = basis_eval(g, x + eps);
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double fd = (hi_v[i] - lo_v[i]) / (2 * eps);
                const double excess =
                    std::abs(d[i] - fd) / std::max({1.0, std::abs(d[i]), std::abs(fd)});
                worst_deriv = std::max(worst_deriv, excess);
            }
        }
    }

    // Fit idempotence: re-fitting a spline's own dense samples must return
    // the same coefficients. The fitter's tiny ridge term biases each fit by
    // an amount that shrinks as the normal matrix grows, so the sampling
    // must be dense for the fixed-point property to show through.
    double worst_refit = 0.0;
    {
        const SplineGrid g = make_grid(3, 8, -1.0, 1.0);
        const int n = 20000;
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = -1.0 + 2.0 * i / (n - 1);
            ys[i] = std::sin(3.0 * xs[i]);
        }
        const std::vector<double> c1 = fit_coefficients(g, xs, ys);
        for (int i = 0; i < n; ++i) {
            const std::vector<double> b = basis_eval(g, xs[i]);
            double v = 0.0;
            for (std::size_t j = 0; j < b.size(); ++j) v += c1[j] * b[j];
            ys[i] = v;
        }
        const std::vector<double> c2 = fit_coefficients(g, xs, ys);
        for (std::size_t j = 0; j < c1.size(); ++j) {
            worst_refit = std::max(worst_refit, std::abs(c1[j] - c2[j]));
        }
    }

    const double secs = seconds_since(t0);
    const bool ok = worst_unity <= 1e-9 && worst_deriv <= 1e-6 &&
                    worst_refit <= 1e-8 && secs < 10.0;

    verdict(ok, 3,
            "partition of unity " + fmt(worst_unity, 12) + " (<=1e-9), derivative vs FD " +
                fmt(worst_deriv, 9) + " (<=1e-6), refit drift " + fmt(worst_refit, 10) +
                " (<=1e-8), " + fmt(secs, 2) + " s");
}

TEST_CASE("criterion 4: [2,3,1] network learns sin(pi x1) + x2^2") {
    const auto t0 = Clock::now();

    Rng rng(42);
    const int n = 2000;
    std::vector<std::array<double, 2>> xs(n);
    std::vector<double> ys(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        ys[i] = std::sin(std::numbers::pi * xs[i][0]) + xs[i][1] * xs[i][1];
    }

    InitOptions opts;
    opts.grid_intervals = 8;
    KanNetwork net = init_network({2, 3, 1}, opts, 42);
    AdamOptimizer::Config acfg;
    acfg.learning_rate = 0.02;
    AdamOptimizer opt(net, acfg);

    const int batch = 256;
    std::vector<std::size_t> order(n);
    for (int i = 0; i < n; ++i) order[i] = static_cast<std::size_t>(i);
    for (int epoch = 0; epoch < 200; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += batch) {
            const int end = std::min(n, start + batch);
            GradientSet acc = make_zero_gradients(net);
            for (int j = start; j < end; ++j) {
                const auto& x = xs[order[j]];
                const double pred = network_forward(net, x)[0];
                const std::array<double, 1> up = {2.0 * (pred - ys[order[j]])};
                backward_accumulate(net, x, up, 1.0 / (end - start), acc);
            }
            opt.step(net, acc);
        }
    }

    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
        const double pred = network_forward(net, xs[i])[0];
        sse += (pred - ys[i]) * (pred - ys[i]);
    }
    const double rmse = std::sqrt(sse / n);
    const double secs = seconds_since(t0);
    const bool ok = rmse <= 0.05 && secs < 120.0;

    verdict(ok, 4,
            "degree 3, G=8, 200 epochs on 2000 samples: RMSE " + fmt(rmse, 5) +
                " (<=0.05), " + fmt(secs, 2) + " s");
}

TEST_CASE("criterion 5: end-to-end pipeline meets the detection floor") {
    const auto t0 = Clock::now();
    const ReferenceRun& ref = reference_run();

    const nlohmann::json rep = nlohmann::json::parse(read_file(ref.report));
    const double ba = rep["full_precision"]["balanced_accuracy"].get<double>();
    const double recall = rep["full_precision"]["recall"].get<double>();

    const double secs = seconds_since(t0);
    const bool ok = ba >= 0.85 && recall >= 0.80 && secs < 300.0;

    verdict(ok, 5,
            "gen-data(seed 42) -> train[4,5,2] 50 epochs -> eval test split: balanced accuracy " +
                fmt(ba, 6) + " (>=0.85), recall " + fmt(recall, 6) + " (>=0.80), " +
                fmt(secs, 2) + " s");
}

TEST_CASE("criterion 6: symbolic extraction stays close to the full model") {
    const ReferenceRun& ref = reference_run();
    const auto t0 = Clock::now(); // extraction budget; the shared run is criterion 5's

    const fs::path formulas = ref.dir / "formulas.txt";
    const RunResult x = run("extract --model " + ref.model.string() + " --data " +
                            ref.data.string() + " --formulas-out " + formulas.string());
    REQUIRE(x.exit_code == 0);

    const nlohmann::json fid =
        nlohmann::json::parse(read_file(ref.dir / "formulas.txt.fidelity.json"));
    const double full_test = fid["full_model"]["test_accuracy"].get<double>();
    const double sym_test = fid["symbolic"]["test_accuracy"].get<double>();
    const double sym_train = fid["symbolic"]["train_accuracy"].get<double>();
    const double model_gap_pp = std::abs(full_test - sym_test) * 100.0;
    const double split_gap_pp = std::abs(sym_train - sym_test) * 100.0;

    const double secs = seconds_since(t0);
    const bool ok = model_gap_pp <= 3.0 && split_gap_pp <= 5.0 && secs < 120.0;

    verdict(ok, 6,
            "full vs symbolic test accuracy gap " + fmt(model_gap_pp, 2) +
                " pp (<=3), symbolic train/test gap " + fmt(split_gap_pp, 2) +
                " pp (<=5), " + fmt(secs, 2) + " s");
}

TEST_CASE("criterion 7: single-sample inference beats the latency ceiling") {
    const ReferenceRun& ref = reference_run();
    const auto t0 = Clock::now(); // bench budget; the shared run is criterion 5's

    const RunResult b = run("bench --model " + ref.model.string() +
                            " --samples 5000 --seed 7 --gate-ms 12.53");
    const auto pos = b.output.find("median: ");
    REQUIRE(pos != std::string::npos);
    const double median_ms = std::stod(b.output.substr(pos + 8));

    const double secs = seconds_since(t0);
    const bool ok = b.exit_code == 0 && median_ms < 12.53 && secs < 30.0;

    verdict(ok, 7,
            "median per-sample latency " + fmt(median_ms, 6) + " ms (<12.53 ms), " +
                fmt(secs, 2) + " s");
}

TEST_CASE("criterion 8: the pipeline is byte-deterministic across reruns") {
    const auto t0 = Clock::now();
    const ReferenceRun& ref = reference_run();

    const fs::path repeat_dir = scratch_dir() / "repeat";
    run_pipeline(repeat_dir);

    const std::uint64_t h_data = file_hash(ref.data);
    const std::uint64_t h_model = file_hash(ref.model);
    const std::uint64_t h_report = file_hash(ref.report);
    const bool same_data = read_file(repeat_dir / "data.csv") == read_file(ref.data);
    const bool same_model = read_file(repeat_dir / "model.kan") == read_file(ref.model);
    const bool same_report = read_file(repeat_dir / "report.json") == read_file(ref.report);

    char hashes[128];
    std::snprintf(hashes, sizeof hashes,
                  "data %016llx model %016llx report %016llx",
                  static_cast<unsigned long long>(h_data),
                  static_cast<unsigned long long>(h_model),
                  static_cast<unsigned long long>(h_report));

    const double secs = seconds_since(t0);
    const bool ok = same_data && same_model && same_report && secs < 600.0;

    verdict(ok, 8,
            std::string("rerun with identical seeds: dataset/model/report ") +
                (same_data && same_model && same_report ? "byte-identical" : "DIFFER") +
                " (" + hashes + "), " + fmt(secs, 2) + " s");
}

TEST_CASE("criterion 9: the decision rule is 1 iff L2 > L1 with ties to 0") {
    const auto t0 = Clock::now();

    SymbolicModel sm;
    sm.widths = {2, 2};
    sm.outputs = {make_var(0), make_var(1)}; // L1 = injected x1, L2 = injected x2

    Rng rng(4242);
    int checked = 0;
    int ties = 0;
    bool all_ok = true;
    for (int i = 0; i < 10000; ++i) {
        double l1 = rng.uniform(-5.0, 5.0);
        double l2 = rng.uniform(-5.0, 5.0);
        if (i % 10 == 0) {
            l2 = l1; // exact tie
            ++ties;
        }
        const int want = l2 > l1 ? 1 : 0;
        all_ok = all_ok && label_from_logits(l1, l2) == want;
        all_ok = all_ok && symbolic_predict(sm, {l1, l2}) == want;
        ++checked;
    }

    // classify applies the same rule to the network's own logits; an all-zero
    // network produces the exact tie (0, 0) on every input.
    InitOptions opts;
    KanNetwork zero = init_network({4, 5, 2}, opts, 0);
    for (KanLayer& layer : zero.layers) {
        for (EdgeActivation& e : layer.edges) {
            std::fill(e.coeffs.begin(), e.coeffs.end(), 0.0);
            e.w_spline = 0.0;
            e.w_base = 0.0;
        }
    }
    const KanNetwork random_net = init_network({4, 5, 2}, opts, 9);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> x(4);
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        all_ok = all_ok && classify(zero, x) == 0; // tied logits -> normal
        const std::vector<double> logits = network_forward(random_net, x);
        all_ok = all_ok && classify(random_net, x) == label_from_logits(logits[0], logits[1]);
    }

    const double secs = seconds_since(t0);
    const bool ok = all_ok && secs < 5.0;

    verdict(ok, 9,
            "logit injection sweep: " + std::to_string(checked) + " points (" +
                std::to_string(ties) + " exact ties) agree for classify and symbolic_predict, " +
                fmt(secs, 2) + " s");
}
