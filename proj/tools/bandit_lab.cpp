// bandit-lab: run offline contextual bandit experiments from the command line.
//
//   bandit-lab run  --bandit h1 --algo neuralcb,linlcb --T 2000 --trials 5
//   bandit-lab grid --bandit h3 --algo all --out results/h3
//   bandit-lab ntk  --bandit h2 --set ntk_rounds=50
//
// Settings are resolved as: --config file, then BANDITLAB_<KEY> environment
// variables, then command-line flags. Exit status: 0 ok, 2 bad configuration,
// 1 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "banditlab/banditlab.hpp"

namespace {

using namespace banditlab;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 1;

struct Overrides {
    std::vector<std::pair<std::string, std::string>> flags;
    std::vector<std::string> set;
    std::string config_file;
};

void add_common(CLI::App* cmd, Overrides& o) {
    struct Flag {
        const char* name;
        const char* key;
        const char* help;
    };
    static const Flag flags[] = {
        {"--algo", "algos", "comma-separated algorithms or 'all'"},
        {"--bandit", "bandit", "h1 | h2 | h3 | mushroom | blobs | classify:<csv>"},
        {"--T", "T", "offline sample size"},
        {"--n-grid", "n_grid", "comma-separated sample sizes to report"},
        {"--trials", "trials", "independent repetitions"},
        {"--mode", "mode", "neural training mode: s or b"},
        {"--beta", "beta", "pessimism weight"},
        {"--lambda", "lambda", "ridge regularization"},
        {"--eta", "eta", "learning rate"},
        {"--sigma", "sigma", "RBF bandwidth for kernlcb"},
        {"--m", "m", "network width"},
        {"--L", "L", "network depth"},
        {"--collect", "collect", "eps:<f> | adaptive:<f> | file:<path>"},
        {"--data", "data", "CSV input for dataset-backed bandits"},
        {"--seed", "seed", "base seed"},
        {"--out", "out", "output directory"},
    };
    for (const auto& f : flags) {
        cmd->add_option_function<std::string>(
            f.name, [&o, key = std::string(f.key)](const std::string& v) { o.flags.emplace_back(key, v); }, f.help);
    }
    cmd->add_option("--config", o.config_file, "key=value settings file");
    cmd->add_option("--set", o.set, "extra key=value setting (repeatable)");
}

ExperimentConfig resolve(const Overrides& o) {
    ExperimentConfig cfg;
    if (!o.config_file.empty()) cfg.merge_file(o.config_file);
    cfg.merge_env();
    for (const auto& [k, v] : o.flags) cfg.set(k, v);
    for (const auto& kv : o.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_report(const SubOptReport& r) {
    std::printf("%-16s %6s %12s %12s %12s\n", "algo", "n", "subopt", "ci_low", "ci_high");
    for (const auto& row : r.rows) {
        std::printf("%-16s %6zu %12.6g %12.6g %12.6g\n", row.algo.c_str(), row.n, row.mean, row.ci_low(),
                    row.ci_high());
    }
}

void save_config(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out);
    std::ofstream os(std::filesystem::path(cfg.out) / "config.txt");
    os << cfg.to_text();
}

int cmd_run(const ExperimentConfig& cfg) {
    const auto report = run_experiment(cfg);
    emit_outputs(report, cfg.out);
    save_config(cfg);
    print_report(report);
    std::printf("wrote %s/results.csv\n", cfg.out.c_str());
    return 0;
}

int cmd_grid(const ExperimentConfig& cfg) {
    const auto search = grid_search(cfg);
    std::filesystem::create_directories(cfg.out);
    {
        std::ofstream os(std::filesystem::path(cfg.out) / "grid.csv");
        write_grid_csv(os, search);
    }
    for (const auto& [algo, h] : search.best) {
        std::printf("%-16s mode=%s eta=%g sigma=%g beta=%g\n", to_string(algo), to_string(h.mode), h.eta, h.sigma,
                    h.beta);
    }
    const auto report = run_experiment(cfg, search.best);
    emit_outputs(report, cfg.out);
    save_config(cfg);
    print_report(report);
    std::printf("wrote %s/results.csv and %s/grid.csv\n", cfg.out.c_str(), cfg.out.c_str());
    return 0;
}

int cmd_ntk(const ExperimentConfig& cfg) {
    const auto instance = build_bandit(cfg.bandit, seeds::instance(cfg.seed));
    const auto data = collect_data(instance, std::min(cfg.T, cfg.ntk_rounds), cfg.collect,
                                   seeds::data(seeds::trial(cfg.seed, 0)));
    const auto s = ntk_summary(data, cfg.ntk_rounds, cfg.depth, cfg.lambda);
    std::printf("lambda0=%.6g effective_dim=%.6g nK=%zu lambda=%.6g\n", s.lambda0, s.effective_dim, s.nk, s.lambda);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Offline contextual bandit experiments"};
    app.require_subcommand(1);
    Overrides run_o, grid_o, ntk_o;
    auto* run = app.add_subcommand("run", "evaluate algorithms with fixed hyperparameters");
    auto* grid = app.add_subcommand("grid", "tune on a held-out run, then evaluate");
    auto* ntk = app.add_subcommand("ntk", "NTK lambda_0 and effective dimension of logged contexts");
    add_common(run, run_o);
    add_common(grid, grid_o);
    add_common(ntk, ntk_o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(resolve(run_o));
        if (grid->parsed()) return cmd_grid(resolve(grid_o));
        return cmd_ntk(resolve(ntk_o));
    } catch (const std::invalid_argument& e) {  // ConfigError, DimensionError
        std::fprintf(stderr, "bandit-lab: configuration error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bandit-lab: error: %s\n", e.what());
        return kExitRuntime;
    }
}
