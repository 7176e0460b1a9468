#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kan/dataset.hpp"
#include "kan/errors.hpp"
#include "kan/metrics.hpp"
#include "kan/model_io.hpp"
#include "kan/network.hpp"
#include "kan/rng.hpp"
#include "kan/symbolic.hpp"
#include "kan/telemetry.hpp"
#include "kan/train.hpp"

using namespace kan;

namespace {

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<int> parse_widths(const std::string& text) {
    std::vector<int> widths;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        int v = 0;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last) {
            throw std::invalid_argument("--widths entry '" + tok + "' is not an integer");
        }
        widths.push_back(v);
    }
    if (widths.size() < 2) {
        throw std::invalid_argument("--widths needs at least two comma-separated entries");
    }
    return widths;
}

std::string widths_text(const std::vector<int>& widths) {
    std::string out = "[";
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i > 0) out += ",";
        out += std::to_string(widths[i]);
    }
    return out + "]";
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
    std::string out;
    std::uint64_t seed = 42;
    std::uint64_t normal_seconds = 1436;
    std::uint64_t attack_seconds = 10094;
    std::string mix;
    std::string profile_file;
};

int run_gen_data(const GenArgs& a) {
    SimConfig cfg;
    cfg.seed = a.seed;
    cfg.n_normal_seconds = a.normal_seconds;
    cfg.n_attack_seconds = a.attack_seconds;
    try {
        if (!a.mix.empty()) cfg.attack_mix = parse_attack_mix(a.mix);
        if (!a.profile_file.empty()) {
            cfg.profile = profile_from_json_text(read_text_file(a.profile_file),
                                                 a.profile_file);
        }
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        // Bad generator configuration is a data error, not a usage error.
        throw DataError(e.what());
    }

    GenResult res = gen_dataset_detailed(cfg);
    write_dataset_csv(res.dataset, a.out);
    const std::string prov_path = a.out + ".provenance.json";
    write_file_atomic(prov_path, res.dataset.provenance);

    std::cout << "wrote " << a.out << ": " << res.dataset.size() << " samples ("
              << res.dataset.count_label(0) << " normal, "
              << res.dataset.count_label(1) << " attack)\n";
    for (const auto& [kind, n] : res.kind_counts) {
        std::cout << "  " << attack_kind_name(kind) << ": " << n << "\n";
    }
    std::cout << "provenance: " << prov_path << "\n";
    return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string out_model;
    std::uint64_t seed = 42;
    int epochs = 50;
    std::string widths = "4,5,2";
    int grid = 3;
    int degree = 3;
    double lr = 1e-2;
    int batch = 256;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    cfg.seed = a.seed;
    cfg.epochs = a.epochs;
    cfg.widths = parse_widths(a.widths);
    cfg.grid_intervals = a.grid;
    cfg.degree = a.degree;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.validate();

    std::cout << "training: widths=" << widths_text(cfg.widths)
              << " degree=" << cfg.degree << " grid=" << cfg.grid_intervals
              << " epochs=" << cfg.epochs << "\n";
    std::cout << "data=" << a.data << " seed=" << a.seed << " lr=" << a.lr
              << " batch=" << a.batch << "\n";

    TelemetryDataset ds = read_dataset_csv(a.data);
    TrainResult res = train(ds, cfg);

    save_model_file(res.network, a.out_model);
    const std::string hist_path = a.out_model + ".history.csv";
    std::string hist = "epoch,mean_loss,train_balanced_accuracy\n";
    for (const EpochStats& e : res.history) {
        hist += std::to_string(e.epoch) + "," + format_double(e.mean_loss) + "," +
                format_double(e.balanced_accuracy) + "\n";
    }
    write_file_atomic(hist_path, hist);

    const EvalReport train_rep = evaluate_subset(res.network, ds, res.train_indices);
    const EvalReport heldout_rep = evaluate_subset(res.network, ds, res.test_indices);
    const EvalReport full_rep = evaluate(res.network, ds);

    std::cout << "best epoch: " << res.best_epoch << "\n";
    std::cout << "train balanced accuracy: " << fmt(train_rep.balanced_accuracy, 6) << "\n";
    std::cout << "heldout balanced accuracy: " << fmt(heldout_rep.balanced_accuracy, 6) << "\n";
    std::cout << "full-file balanced accuracy: " << fmt(full_rep.balanced_accuracy, 6) << "\n";
    std::cout << "wrote " << a.out_model << "\n";
    std::cout << "history: " << hist_path << "\n";
    return 0;
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string model;
    std::string report_out;
    std::string split = "all";
    double gate = -1.0;
    bool gate_set = false;
};

int run_eval(const EvalArgs& a) {
    KanNetwork net = load_model_file(a.model);
    TelemetryDataset ds = read_dataset_csv(a.data);

    EvalReport rep;
    if (a.split == "all") {
        rep = evaluate(net, ds);
    } else {
        if (net.meta.split_fraction <= 0.0 || net.meta.split_fraction >= 1.0) {
            throw ModelError("model carries no train/test split; --split " + a.split +
                             " needs a model trained by this tool");
        }
        if (net.meta.data_fingerprint != dataset_fingerprint(ds)) {
            throw DataError("--split " + a.split +
                            " requires the model's original training file "
                            "(dataset fingerprint mismatch)");
        }
        auto [train_idx, test_idx] =
            stratified_split(ds, net.meta.split_fraction, net.meta.seed);
        rep = evaluate_subset(net, ds, a.split == "train" ? train_idx : test_idx);
    }

    std::cout << format_report_text(rep);
    std::cout << "balanced accuracy (exact): " << fmt(rep.balanced_accuracy, 6) << "\n";
    if (!a.report_out.empty()) {
        write_file_atomic(a.report_out, format_report_json(rep));
        std::cout << "report: " << a.report_out << "\n";
    }
    if (a.gate_set) {
        if (rep.balanced_accuracy < a.gate) {
            std::cout << "gate FAILED: balanced accuracy "
                      << fmt(rep.balanced_accuracy, 6) << " < " << fmt(a.gate, 6) << "\n";
            return 4;
        }
        std::cout << "gate passed: balanced accuracy "
                  << fmt(rep.balanced_accuracy, 6) << " >= " << fmt(a.gate, 6) << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------ extract

struct ExtractArgs {
    std::string model;
    std::string data;
    std::string formulas_out;
};

int run_extract(const ExtractArgs& a) {
    KanNetwork net = load_model_file(a.model);

    const std::string tree_path = a.formulas_out + ".tree.json";
    const bool trained = net.meta.standardizer && net.meta.split_fraction > 0.0 &&
                         net.meta.split_fraction < 1.0;
    if (!trained) {
        SymbolicModel sm = extract_model(net);
        write_file_atomic(a.formulas_out, format_formulas_text(sm));
        write_file_atomic(tree_path, symbolic_model_to_json_text(sm));
        std::cout << "formulas: " << a.formulas_out << "\n";
        std::cout << "trees: " << tree_path << "\n";
        std::cout << "fidelity skipped: model was not trained, so there is no "
                     "train/test split to score\n";
        return 0;
    }

    TelemetryDataset ds = read_dataset_csv(a.data);
    if (net.meta.data_fingerprint != dataset_fingerprint(ds)) {
        throw DataError("extract requires the model's original training file for "
                        "the fidelity split (dataset fingerprint mismatch)");
    }
    auto [train_idx, test_idx] =
        stratified_split(ds, net.meta.split_fraction, net.meta.seed);
    std::vector<LabeledSample> train_samples, test_samples;
    train_samples.reserve(train_idx.size());
    test_samples.reserve(test_idx.size());
    for (std::size_t i : train_idx) train_samples.push_back(ds.samples[i]);
    for (std::size_t i : test_idx) test_samples.push_back(ds.samples[i]);

    // the data-driven fit sees only the train split's inputs, so the test
    // rows below stay genuinely held out
    std::vector<std::vector<double>> train_rows;
    train_rows.reserve(train_samples.size());
    for (const LabeledSample& s : train_samples) {
        train_rows.push_back(net.meta.standardizer->transform(s.features()));
    }
    SymbolicModel sm = extract_model(net, train_rows);

    write_file_atomic(a.formulas_out, format_formulas_text(sm));
    write_file_atomic(tree_path, symbolic_model_to_json_text(sm));
    std::cout << "formulas: " << a.formulas_out << "\n";
    std::cout << "trees: " << tree_path << "\n";

    const FidelityReport rep = fidelity_report(net, sm, train_samples, test_samples);
    const std::string fidelity_path = a.formulas_out + ".fidelity.json";
    write_file_atomic(fidelity_path, fidelity_to_json_text(rep));

    std::cout << "full model test accuracy: " << fmt(rep.full_test_accuracy, 4) << "\n";
    std::cout << "symbolic test accuracy: " << fmt(rep.sym_test_accuracy, 4) << "\n";
    std::cout << "test accuracy gap: "
              << fmt(std::abs(rep.full_test_accuracy - rep.sym_test_accuracy) * 100.0, 2)
              << " pp\n";
    std::cout << "symbolic train/test gap: "
              << fmt(std::abs(rep.sym_train_accuracy - rep.sym_test_accuracy) * 100.0, 2)
              << " pp\n";
    if (rep.overfit_warning) {
        std::cout << "warning: symbolic train/test gap exceeds 5 pp (possible overfit)\n";
    }
    std::cout << "fidelity: " << fidelity_path << "\n";
    return 0;
}

// -------------------------------------------------------------------- infer

struct InferArgs {
    std::string model;
    std::string in = "-";
    std::string out = "-";
};

int run_infer(const InferArgs& a) {
    KanNetwork net = load_model_file(a.model);
    if (!net.meta.standardizer) {
        throw ModelError("model carries no standardizer; train it first");
    }
    const Standardizer& st = *net.meta.standardizer;

    std::ifstream fin;
    std::istream* in = &std::cin;
    if (a.in != "-") {
        fin.open(a.in, std::ios::binary);
        if (!fin) throw DataError("cannot open input: " + a.in);
        in = &fin;
    }

    const bool to_file = a.out != "-";
    const std::string tmp_path = a.out + ".tmp";
    std::ofstream fout;
    std::ostream* out = &std::cout;
    if (to_file) {
        fout.open(tmp_path, std::ios::binary | std::ios::trunc);
        if (!fout) throw DataError("cannot open for writing: " + tmp_path);
        out = &fout;
    }

    std::size_t n_ok = 0;
    std::size_t n_bad = 0;
    std::size_t line_no = 0;
    std::string line;
    std::vector<double> u(static_cast<std::size_t>(net.input_dim()));
    try {
        while (std::getline(*in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (line.rfind("timestamp,", 0) == 0) continue; // header row

            // Rows may arrive with or without the trailing label column.
            std::string padded = line;
            if (std::count(line.begin(), line.end(), ',') == 4) padded += ",0";

            LabeledSample s;
            std::string error;
            if (!parse_csv_row(padded, s, error)) {
                ++n_bad;
                std::cerr << "line " << line_no << ": " << error << "\n";
                continue;
            }
            ++n_ok;
            st.transform(s.features(), u);
            const std::vector<double> logits = network_forward(net, u);
            (*out) << s.timestamp << ',' << label_from_logits(logits[0], logits[1])
                   << ',' << format_double(logits[0]) << ','
                   << format_double(logits[1]) << '\n';
            out->flush();
        }
    } catch (...) {
        if (to_file) {
            fout.close();
            std::filesystem::remove(tmp_path);
        }
        throw;
    }

    if (to_file) {
        fout.close();
        std::error_code ec;
        std::filesystem::rename(tmp_path, a.out, ec);
        if (ec) throw DataError("rename failed for " + a.out + ": " + ec.message());
    }

    const std::size_t total = n_ok + n_bad;
    if (total > 0 && n_bad * 10 > total) {
        std::cerr << n_bad << " of " << total << " rows malformed (>10%)\n";
        return 2;
    }
    return 0;
}

// -------------------------------------------------------------------- bench

struct BenchArgs {
    std::string model;
    std::uint64_t samples = 10000;
    std::uint64_t seed = 42;
    double gate_ms = -1.0;
    bool gate_set = false;
};

int run_bench(const BenchArgs& a) {
    KanNetwork net = load_model_file(a.model);
    if (!net.meta.standardizer) {
        throw ModelError("model carries no standardizer; train it first");
    }
    const Standardizer& st = *net.meta.standardizer;
    if (net.input_dim() != kFeatureCount) {
        throw DimensionMismatchError("bench expects a " +
                                     std::to_string(kFeatureCount) + "-feature model");
    }

    // Pre-generated plausible raw inputs; the timed path is exactly what
    // infer runs per row (standardize + forward + decision).
    const std::size_t n = a.samples;
    std::vector<std::array<double, 4>> inputs(n);
    Rng rng(a.seed);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (auto& f : inputs) {
        f[0] = rng.uniform(0.0, 0.15);  // shunt voltage
        f[1] = rng.uniform(4.8, 5.4);   // bus voltage
        f[2] = rng.uniform(0.1, 1.3);   // current
        f[3] = f[1] * f[2];             // power
        hash = fnv1a(f.data(), sizeof(double) * f.size(), hash);
    }
    {
        char buf[19];
        std::snprintf(buf, sizeof buf, "0x%016llx",
                      static_cast<unsigned long long>(hash));
        std::cout << "inputs: " << n << " samples, hash " << buf << "\n";
    }

    std::vector<double> u(4);
    long sink = 0;
    auto run_one = [&](const std::array<double, 4>& f) {
        st.transform(f, u);
        return classify(net, u);
    };

    for (std::size_t i = 0; i < 100; ++i) sink += run_one(inputs[i % n]);

    std::vector<double> ms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink += run_one(inputs[i]);
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());

    auto rank = [&](double q) {
        const auto idx = static_cast<std::size_t>(
            std::ceil(q * static_cast<double>(n)));
        return ms[std::min(n - 1, idx == 0 ? 0 : idx - 1)];
    };
    const double median = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);

    std::cout << "median: " << fmt(median, 6) << " ms\n";
    std::cout << "p95: " << fmt(rank(0.95), 6) << " ms\n";
    std::cout << "p99: " << fmt(rank(0.99), 6) << " ms\n";
    std::cout << "decision checksum: " << sink << "\n";

    if (a.gate_set) {
        if (median > a.gate_ms) {
            std::cout << "gate FAILED: median " << fmt(median, 6) << " ms > "
                      << fmt(a.gate_ms, 6) << " ms\n";
            return 4;
        }
        std::cout << "gate passed: median " << fmt(median, 6) << " ms <= "
                  << fmt(a.gate_ms, 6) << " ms\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"KAN-based EVSE cyberattack detector"};
    app.require_subcommand(1);

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand(
        "gen-data", "Generate a labeled synthetic telemetry dataset");
    gen->add_option("--out", gen_args.out, "Dataset CSV path")->required();
    gen->add_option("--seed", gen_args.seed, "Generator seed")->capture_default_str();
    gen->add_option("--normal-seconds", gen_args.normal_seconds,
                    "Seconds of normal traffic")
        ->capture_default_str()
        ->check(CLI::Range(std::uint64_t{100}, std::uint64_t{1000000000}));
    gen->add_option("--attack-seconds", gen_args.attack_seconds,
                    "Seconds of attack traffic")
        ->capture_default_str()
        ->check(CLI::Range(std::uint64_t{100}, std::uint64_t{1000000000}));
    gen->add_option("--mix", gen_args.mix,
                    "Attack mix, e.g. 'cryptojacking=0.7,dos=0.3' (default: built-in mix)");
    gen->add_option("--profile-file", gen_args.profile_file,
                    "JSON charger profile overriding the defaults");

    TrainArgs train_args;
    CLI::App* train_cmd =
        app.add_subcommand("train", "Train a detector on a labeled dataset");
    train_cmd->add_option("--data", train_args.data, "Training dataset CSV")->required();
    train_cmd->add_option("--out-model", train_args.out_model, "Output .kan model path")
        ->required();
    train_cmd->add_option("--seed", train_args.seed, "Split/init/shuffle seed")
        ->capture_default_str();
    train_cmd->add_option("--epochs", train_args.epochs, "Training epochs")
        ->capture_default_str()
        ->check(CLI::Range(1, 1000000));
    train_cmd->add_option("--widths", train_args.widths, "Layer widths, comma separated")
        ->capture_default_str();
    train_cmd->add_option("--grid", train_args.grid, "Spline grid intervals")
        ->capture_default_str()
        ->check(CLI::Range(1, 100000));
    train_cmd->add_option("--degree", train_args.degree, "Spline degree")
        ->capture_default_str()
        ->check(CLI::Range(0, 10));
    train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", train_args.batch, "Mini-batch size")
        ->capture_default_str()
        ->check(CLI::Range(1, 1 << 28));

    EvalArgs eval_args;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Evaluate a model on a labeled dataset");
    eval_cmd->add_option("--data", eval_args.data, "Dataset CSV")->required();
    eval_cmd->add_option("--model", eval_args.model, "Model .kan path")->required();
    eval_cmd->add_option("--report-out", eval_args.report_out, "JSON report path");
    eval_cmd->add_option("--split", eval_args.split,
                         "Which rows to score: all, or the model's train/test split")
        ->capture_default_str()
        ->check(CLI::IsMember({"all", "train", "test"}));
    CLI::Option* eval_gate =
        eval_cmd->add_option("--gate", eval_args.gate,
                             "Exit 4 unless balanced accuracy reaches this floor")
            ->check(CLI::Range(0.0, 1.0));

    ExtractArgs extract_args;
    CLI::App* extract_cmd = app.add_subcommand(
        "extract", "Extract symbolic formulas and score their fidelity");
    extract_cmd->add_option("--model", extract_args.model, "Model .kan path")->required();
    extract_cmd->add_option("--data", extract_args.data,
                            "The model's original training dataset CSV")
        ->required();
    extract_cmd->add_option("--formulas-out", extract_args.formulas_out,
                            "Formula text path (tree/fidelity JSON written alongside)")
        ->required();

    InferArgs infer_args;
    CLI::App* infer_cmd = app.add_subcommand(
        "infer", "Stream per-sample verdicts: timestamp,label,logit_normal,logit_attack");
    infer_cmd->add_option("--model", infer_args.model, "Model .kan path")->required();
    infer_cmd->add_option("--in", infer_args.in, "Input CSV path, or - for stdin")
        ->capture_default_str();
    infer_cmd->add_option("--out", infer_args.out, "Output path, or - for stdout")
        ->capture_default_str();

    BenchArgs bench_args;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "Measure single-sample inference latency");
    bench_cmd->add_option("--model", bench_args.model, "Model .kan path")->required();
    bench_cmd->add_option("--samples", bench_args.samples, "Timed samples")
        ->capture_default_str()
        ->check(CLI::Range(std::uint64_t{1}, std::uint64_t{100000000}));
    bench_cmd->add_option("--seed", bench_args.seed, "Input generator seed")
        ->capture_default_str();
    CLI::Option* bench_gate =
        bench_cmd->add_option("--gate-ms", bench_args.gate_ms,
                              "Exit 4 if the median exceeds this many milliseconds")
            ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    eval_args.gate_set = eval_gate->count() > 0;
    bench_args.gate_set = bench_gate->count() > 0;

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (extract_cmd->parsed()) return run_extract(extract_args);
        if (infer_cmd->parsed()) return run_infer(infer_args);
        if (bench_cmd->parsed()) return run_bench(bench_args);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ModelError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
