// Command-line front end: run, check, cost, bench.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "onebit_fl/checks.hpp"
#include "onebit_fl/client.hpp"
#include "onebit_fl/config.hpp"
#include "onebit_fl/error.hpp"
#include "onebit_fl/federation.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/report.hpp"
#include "onebit_fl/sketch.hpp"

namespace fs = std::filesystem;
using namespace onebit;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

/// Flags shared by every subcommand. Each set flag becomes a config line
/// appended after the file, so flags override file keys.
struct CommonFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
        add(app, "--algo", "algorithm", "pfed1bs | fedavg | local");
        add(app, "--rounds", "T", "Communication rounds T");
        add(app, "--clients", "K", "Number of clients K");
        add(app, "--participants", "S", "Clients aggregated per round S");
        add(app, "--m-ratio", "m_ratio", "Sketch ratio m/n in (0, 1]");
        add(app, "--seed", "seed", "Master seed");
        add(app, "--out", "output_dir", "Output directory");
        add(app, "--potential", "potential", "exact | sampled");
        flag(app, "--train-all-clients", "train_all_clients", "Every client trains each round");
        flag(app, "--strict-onebit-downlink", "strict_onebit_downlink", "Break consensus ties to +1, charge m bits");
        flag(app, "--broadcast-once", "broadcast_once", "Charge the downlink once per round");
    }

    ExperimentConfig load() const {
        std::string text;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config file " + config_path);
            std::stringstream buf;
            buf << in.rdbuf();
            text = buf.str();
        }
        text += "\n";
        for (const auto& [key, value] : overrides) text += key + " = " + value + "\n";
        return parse_config(text);
    }

private:
    void add(CLI::App* app, const std::string& name, std::string key, const std::string& help) {
        app->add_option_function<std::string>(
            name, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
    }
    void flag(CLI::App* app, const std::string& name, std::string key, const std::string& help) {
        app->add_flag_callback(name, [this, key] { overrides.emplace_back(key, "true"); }, help);
    }
};

void print_warnings(const ExperimentConfig& config) {
    ExperimentConfig copy = config;
    for (const auto& w : validate_config(copy)) std::cerr << "warning: " << w << '\n';
}

int cmd_run(const CommonFlags& flags) {
    const auto config = flags.load();
    print_warnings(config);
    const auto fed = build_dataset(config);
    const auto start = std::chrono::steady_clock::now();
    const auto result = run(config.federation, fed);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    {
        std::ofstream csv(dir / "metrics.csv");
        write_metrics_csv(csv, result.rounds);
    }
    {
        std::ofstream echo(dir / "config.txt");
        echo << canonical_echo(config);
    }
    {
        std::ofstream summary(dir / "summary.json");
        summary << run_summary(result, config, wall).dump(2) << '\n';
    }
    for (const auto& s : result.skipped) {
        std::cerr << "skipped client " << s.client << " in round " << s.round << ": " << s.reason << '\n';
    }
    const double acc = result.rounds.empty() ? 0.0 : result.rounds.back().mean_test_accuracy;
    std::printf("%s: %zu rounds, n=%zu m=%zu, final accuracy %.4f, wrote %s\n",
                to_string(config.federation.algorithm).c_str(), result.rounds.size(), result.n, result.m, acc,
                dir.string().c_str());
    return 0;
}

int cmd_check(std::uint64_t seed, std::size_t rounds, const std::string& out_path) {
    diagnostics::CheckOptions opt;
    opt.seed = seed;
    opt.rounds = rounds;
    const auto results = diagnostics::run_check_suite(opt);
    const auto json = diagnostics::checks_to_json(results).dump(2);
    std::cout << json << '\n';
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << json << '\n';
    }
    for (const auto& r : results) {
        if (!r.pass) return kExitNumeric;
    }
    return 0;
}

double mib(std::uint64_t bits) { return static_cast<double>(bits) / 8.0 / 1048576.0; }

void print_ledger_rows(const char* label, std::size_t n, std::size_t m, std::size_t S) {
    std::printf("%s  (n = %zu, m = %zu, S = %zu)\n", label, n, m, S);
    std::printf("  %-34s %14s %14s %12s\n", "accounting", "pFed1BS bits", "FedAvg bits", "reduction");
    for (bool once : {false, true}) {
        for (bool strict : {false, true}) {
            const auto l = round_ledger(n, m, S, 32, strict, once);
            char name[64];
            std::snprintf(name, sizeof name, "%s, %s downlink", once ? "broadcast" : "unicast",
                          strict ? "1-bit" : "ternary");
            std::printf("  %-34s %14llu %14llu %11.4f%%\n", name, static_cast<unsigned long long>(l.onebit_total()),
                        static_cast<unsigned long long>(l.fedavg_total()),
                        100.0 * (1.0 - static_cast<double>(l.onebit_total()) / static_cast<double>(l.fedavg_total())));
        }
    }
    const auto up = round_ledger(n, m, S, 32, true, false);
    std::printf("  uplink only: pFed1BS %.4f MiB, FedAvg %.4f MiB, reduction %.4f%%\n", mib(up.onebit_uplink),
                mib(up.fedavg_uplink), 100.0 * comm_cost_reduction(32, n, m));
    std::printf("  uplink + 1-bit downlink: pFed1BS %.4f MiB, FedAvg %.4f MiB\n",
                mib(up.onebit_uplink + up.onebit_downlink), mib(up.fedavg_uplink + up.fedavg_downlink));
}

int cmd_cost(const CommonFlags& flags) {
    const auto config = flags.load();
    const double ratio = config.federation.m_ratio;
    std::printf("uplink reduction at m/n = %g, 32-bit parameters: 1 - %g/32 = %.6f (%.2f%%)\n", ratio, ratio,
                1.0 - ratio / 32.0, 100.0 * (1.0 - ratio / 32.0));
    const std::size_t n = config.federation.model.parameter_count();
    const std::size_t m = sketch_dimension(n, ratio);
    print_ledger_rows("configured model", n, m, config.federation.hp.participants);

    // Reference row: two-layer MNIST MLP 784-256-10 with K = S = 20.
    const std::size_t n_ref = ModelSpec::mlp({784, 256, 10}).parameter_count();
    print_ledger_rows("reference MNIST MLP 784-256-10", n_ref, sketch_dimension(n_ref, ratio), 20);
    return 0;
}

template <typename F>
double time_per_call(F&& f, double min_seconds = 0.05) {
    std::size_t reps = 0;
    const auto start = std::chrono::steady_clock::now();
    double elapsed = 0.0;
    do {
        f();
        ++reps;
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } while (elapsed < min_seconds);
    return elapsed / static_cast<double>(reps);
}

int cmd_bench() {
    const auto default_isa = kernels::active().isa;
    std::printf("%-10s %-8s %14s\n", "fwht n", "isa", "us/call");
    for (std::size_t log_n = 10; log_n <= 20; log_n += 2) {
        const std::size_t n = std::size_t{1} << log_n;
        std::vector<double> x(n, 1.0);
        for (auto isa : {kernels::Isa::scalar, kernels::Isa::avx2}) {
            if (!kernels::supported(isa)) continue;
            kernels::set_active(isa);
            // Orthonormal transform, so repeated application keeps values bounded.
            const double s = time_per_call([&] { fwht_in_place(x); });
            std::printf("%-10zu %-8s %14.2f\n", n, std::string(kernels::isa_name(isa)).c_str(), s * 1e6);
        }
        kernels::set_active(default_isa);
    }
    std::printf("\n%-24s %10s %8s %14s\n", "client_update model", "n", "m", "ms/call");
    SyntheticSpec spec;
    spec.clients = 1;
    spec.samples_per_client = 512;
    spec.dim = 784;
    const auto fed = federate(generate_synthetic(spec).clients, 0.0, 1, 2);
    const std::vector<std::pair<std::string, ModelSpec>> models = {
        {"logistic 784x2", ModelSpec::logistic(784, 2)},
        {"mlp 784-64-2", ModelSpec::mlp({784, 64, 2})},
        {"mlp 784-256-2", ModelSpec::mlp({784, 256, 2})},
    };
    for (const auto& [name, model] : models) {
        FederationConfig cfg;
        cfg.model = model;
        const auto clients = make_clients(cfg, fed);
        const std::size_t n = model.parameter_count();
        const SketchOperator op(sketch_seed(1), n, sketch_dimension(n, 0.1));
        const ConsensusVector v(op.m());
        const double s = time_per_call([&] { client_update(clients[0], v, op, model, cfg.hp, fed.data); }, 0.2);
        std::printf("%-24s %10zu %8zu %14.3f\n", name.c_str(), n, op.m(), s * 1e3);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized federated learning with one-bit random sketches"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "Run a federated experiment and write metrics.csv and summary.json");
    run_flags.attach(run_cmd);

    CommonFlags cost_flags;
    auto* cost_cmd = app.add_subcommand("cost", "Print the per-round communication ledger");
    cost_flags.attach(cost_cmd);

    std::uint64_t check_seed = 1;
    std::size_t check_rounds = 40;
    std::string check_out;
    auto* check_cmd = app.add_subcommand("check", "Run the diagnostics suite and print a JSON report");
    check_cmd->add_option("--seed", check_seed, "Seed for the randomized checks");
    check_cmd->add_option("--rounds", check_rounds, "Rounds of the convergence run");
    check_cmd->add_option("--out", check_out, "Also write the report to this file");

    auto* bench_cmd = app.add_subcommand("bench", "Time FWHT and client_update");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitValidation;
    }

    try {
        if (*run_cmd) return cmd_run(run_flags);
        if (*cost_cmd) return cmd_cost(cost_flags);
        if (*check_cmd) return cmd_check(check_seed, check_rounds, check_out);
        if (*bench_cmd) return cmd_bench();
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
