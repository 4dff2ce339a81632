#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "banditlab/bandits.hpp"
#include "banditlab/data.hpp"
#include "banditlab/dataset.hpp"
#include "banditlab/nn.hpp"
#include "banditlab/ntk.hpp"
#include "banditlab/policies.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

// ---------------------------------------------------------------------------
// Algorithms and hyperparameters
// ---------------------------------------------------------------------------

enum class Algorithm { NeuralCB, NeuralGreedy, LinLCB, KernLCB, NeuralLinLCB, NeuralLinGreedy };

inline constexpr std::array<Algorithm, 6> kAllAlgorithms{Algorithm::NeuralCB,     Algorithm::NeuralGreedy,
                                                         Algorithm::LinLCB,       Algorithm::KernLCB,
                                                         Algorithm::NeuralLinLCB, Algorithm::NeuralLinGreedy};

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::NeuralCB: return "neuralcb";
        case Algorithm::NeuralGreedy: return "neuralgreedy";
        case Algorithm::LinLCB: return "linlcb";
        case Algorithm::KernLCB: return "kernlcb";
        case Algorithm::NeuralLinLCB: return "neurallinlcb";
        case Algorithm::NeuralLinGreedy: return "neurallingreedy";
    }
    return "?";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    for (Algorithm a : kAllAlgorithms) {
        if (s == to_string(a)) return a;
    }
    throw ConfigError("unknown algorithm '" + s + "'");
}

inline const char* to_string(TrainMode m) { return m == TrainMode::S ? "s" : "b"; }

inline TrainMode mode_from_string(const std::string& s) {
    if (s == "s" || s == "S") return TrainMode::S;
    if (s == "b" || s == "B") return TrainMode::B;
    throw ConfigError("training mode must be 's' or 'b', got '" + s + "'");
}

struct Hyperparams {
    double beta = 0.05;
    double eta = 1e-3;
    double sigma = 1.0;
    TrainMode mode = TrainMode::S;

    bool operator==(const Hyperparams&) const = default;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct BanditSpec {
    std::string kind = "h1";  // h1 | h2 | h3 | mushroom | classify:<path> | blobs
    Eigen::Index dim = 10;
    std::size_t arms = 5;
    double noise = 0.1;
    bool duplicate = false;
    std::string data;    // mushroom CSV
    std::string schema;  // classify schema; default <path>.schema.json
    std::size_t blob_rows = 3000;
    double blob_separation = 3.0;
};

struct CollectSpec {
    BehaviorKind kind = BehaviorKind::EpsGreedy;
    double epsilon = 0.1;
    std::string path;  // External: a dataset file written by save_dataset
};

inline CollectSpec parse_collect(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("collect must look like eps:<f>, adaptive:<f> or file:<path>");
    const std::string head = s.substr(0, colon);
    const std::string tail = s.substr(colon + 1);
    CollectSpec c;
    if (head == "file") {
        c.kind = BehaviorKind::External;
        c.path = tail;
        return c;
    }
    if (head == "eps") c.kind = BehaviorKind::EpsGreedy;
    else if (head == "adaptive") c.kind = BehaviorKind::Adaptive;
    else throw ConfigError("unknown collection policy '" + head + "'");
    try {
        std::size_t used = 0;
        c.epsilon = std::stod(tail, &used);
        if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
        throw ConfigError("bad epsilon '" + tail + "' in collect spec");
    }
    if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("collect epsilon must lie in [0, 1]");
    return c;
}

inline std::string format_collect(const CollectSpec& c) {
    if (c.kind == BehaviorKind::External) return "file:" + c.path;
    std::ostringstream os;
    os << (c.kind == BehaviorKind::EpsGreedy ? "eps:" : "adaptive:") << c.epsilon;
    return os.str();
}

namespace detail {

inline std::string trim_ws(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    if (!v.empty() && v[0] != '-') {
        try {
            std::size_t used = 0;
            const unsigned long long x = std::stoull(v, &used);
            if (used == v.size()) return x;
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + v + "'");
}

inline bool parse_flag(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim_ws(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& v, F&& one) {
    std::vector<T> out;
    for (const auto& item : split_list(v)) out.push_back(one(key, item));
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

inline std::string join_reals(const std::vector<double>& xs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    return os.str();
}

}  // namespace detail

/// Everything that determines a report. Text form is flat key=value lines;
/// every key can also come from BANDITLAB_<KEY> in the environment.
struct ExperimentConfig {
    BanditSpec bandit;
    CollectSpec collect;
    std::vector<Algorithm> algorithms{Algorithm::NeuralCB};
    std::size_t T = 2000;
    std::vector<std::size_t> n_grid;  // empty: just T
    std::size_t trials = 5;
    std::size_t n_te = 2000;
    double lambda = 0.1;
    Hyperparams hyper;

    int depth = 2;
    int width = 20;
    bool layer_norm = true;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double l2 = 1e-4;
    std::size_t batch_size = 50;
    std::size_t epochs = 100;
    std::optional<CovarianceMode> covariance;  // empty: by parameter count
    ReturnRule return_rule = ReturnRule::Latest;
    std::size_t kern_cap = 1000;

    std::uint64_t seed = 0;
    std::vector<double> beta_grid{0.01, 0.05, 0.1, 1.0, 5.0, 10.0};
    std::vector<double> eta_grid{1e-4, 1e-3};
    std::vector<double> sigma_grid{0.1, 1.0, 10.0};
    std::vector<TrainMode> mode_grid{TrainMode::S, TrainMode::B};

    bool timing = false;  // wall-clock seconds in the report (breaks byte-identical output)
    std::size_t ntk_rounds = 100;
    std::string out = "out";

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k{
            "bandit", "dim",   "arms",       "noise",      "duplicate", "data",     "schema",    "blob_rows",
            "blob_separation", "collect",    "algos",      "T",         "n_grid",   "trials",    "n_te",
            "lambda", "beta",  "eta",        "sigma",      "mode",      "L",        "m",         "layer_norm",
            "optimizer",       "l2",         "batch",      "epochs",    "covariance", "return",  "kern_cap",
            "seed",   "beta_grid", "eta_grid", "sigma_grid", "mode_grid", "timing", "ntk_rounds", "out"};
        return k;
    }

    void set(const std::string& raw_key, const std::string& raw_value) {
        using namespace detail;
        const std::string key = trim_ws(raw_key);
        const std::string v = trim_ws(raw_value);
        if (key == "bandit") bandit.kind = v;
        else if (key == "dim") bandit.dim = static_cast<Eigen::Index>(parse_unsigned(key, v));
        else if (key == "arms") bandit.arms = parse_unsigned(key, v);
        else if (key == "noise") bandit.noise = parse_real(key, v);
        else if (key == "duplicate") bandit.duplicate = parse_flag(key, v);
        else if (key == "data") bandit.data = v;
        else if (key == "schema") bandit.schema = v;
        else if (key == "blob_rows") bandit.blob_rows = parse_unsigned(key, v);
        else if (key == "blob_separation") bandit.blob_separation = parse_real(key, v);
        else if (key == "collect") collect = parse_collect(v);
        else if (key == "algos") {
            algorithms.clear();
            if (v == "all") algorithms.assign(kAllAlgorithms.begin(), kAllAlgorithms.end());
            else algorithms = parse_list<Algorithm>(key, v, [](const std::string&, const std::string& s) {
                return algorithm_from_string(s);
            });
        } else if (key == "T") T = parse_unsigned(key, v);
        else if (key == "n_grid") n_grid = parse_list<std::size_t>(key, v, parse_unsigned);
        else if (key == "trials") trials = parse_unsigned(key, v);
        else if (key == "n_te") n_te = parse_unsigned(key, v);
        else if (key == "lambda") lambda = parse_real(key, v);
        else if (key == "beta") hyper.beta = parse_real(key, v);
        else if (key == "eta") hyper.eta = parse_real(key, v);
        else if (key == "sigma") hyper.sigma = parse_real(key, v);
        else if (key == "mode") hyper.mode = mode_from_string(v);
        else if (key == "L") depth = static_cast<int>(parse_unsigned(key, v));
        else if (key == "m") width = static_cast<int>(parse_unsigned(key, v));
        else if (key == "layer_norm") layer_norm = parse_flag(key, v);
        else if (key == "optimizer") {
            if (v == "adam") optimizer = OptimizerKind::Adam;
            else if (v == "sgd") optimizer = OptimizerKind::Sgd;
            else throw ConfigError("optimizer must be 'adam' or 'sgd'");
        } else if (key == "l2") l2 = parse_real(key, v);
        else if (key == "batch") batch_size = parse_unsigned(key, v);
        else if (key == "epochs") epochs = parse_unsigned(key, v);
        else if (key == "covariance") {
            if (v == "auto") covariance.reset();
            else if (v == "full") covariance = CovarianceMode::Full;
            else if (v == "diag") covariance = CovarianceMode::Diagonal;
            else throw ConfigError("covariance must be auto, full or diag");
        } else if (key == "return") {
            if (v == "latest") return_rule = ReturnRule::Latest;
            else if (v == "ensemble") return_rule = ReturnRule::UniformEnsemble;
            else throw ConfigError("return must be 'latest' or 'ensemble'");
        } else if (key == "kern_cap") kern_cap = parse_unsigned(key, v);
        else if (key == "seed") seed = parse_unsigned(key, v);
        else if (key == "beta_grid") beta_grid = parse_list<double>(key, v, parse_real);
        else if (key == "eta_grid") eta_grid = parse_list<double>(key, v, parse_real);
        else if (key == "sigma_grid") sigma_grid = parse_list<double>(key, v, parse_real);
        else if (key == "mode_grid") mode_grid = parse_list<TrainMode>(key, v, [](const std::string&, const std::string& s) {
            return mode_from_string(s);
        });
        else if (key == "timing") timing = parse_flag(key, v);
        else if (key == "ntk_rounds") ntk_rounds = parse_unsigned(key, v);
        else if (key == "out") out = v;
        else throw ConfigError("unknown config key '" + key + "'");
    }

    /// Reads key=value lines; '#' starts a comment.
    void merge_text(std::istream& is, const std::string& origin = "config") {
        std::string line;
        std::size_t no = 0;
        while (std::getline(is, line)) {
            ++no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            line = detail::trim_ws(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + ":" + std::to_string(no) + ": expected key=value");
            }
            try {
                set(line.substr(0, eq), line.substr(eq + 1));
            } catch (const ConfigError& e) {
                throw ConfigError(origin + ":" + std::to_string(no) + ": " + e.what());
            }
        }
    }

    void merge_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file '" + path + "'");
        merge_text(is, path);
    }

    /// Applies BANDITLAB_<KEY> overrides (key upper-cased). `lookup` defaults to getenv.
    void merge_env(const std::function<const char*(const char*)>& lookup = [](const char* n) {
        return std::getenv(n);
    }) {
        for (const auto& key : keys()) {
            std::string name = "BANDITLAB_";
            for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            if (const char* v = lookup(name.c_str())) {
                try {
                    set(key, v);
                } catch (const ConfigError& e) {
                    throw ConfigError(name + ": " + e.what());
                }
            }
        }
    }

    [[nodiscard]] std::vector<std::size_t> sample_sizes() const { return n_grid.empty() ? std::vector{T} : n_grid; }

    [[nodiscard]] NetworkConfig network(Eigen::Index input_dim) const {
        return NetworkConfig{depth, width, static_cast<int>(input_dim), layer_norm};
    }

    void validate() const {
        if (algorithms.empty()) throw ConfigError("no algorithms selected");
        if (T < 1) throw ConfigError("T must be >= 1");
        if (trials < 1) throw ConfigError("trials must be >= 1");
        if (n_te < 1) throw ConfigError("n_te must be >= 1");
        if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
        if (hyper.beta < 0.0) throw ConfigError("beta must be nonnegative");
        if (hyper.eta < 0.0) throw ConfigError("eta must be nonnegative");
        if (!(hyper.sigma > 0.0)) throw ConfigError("sigma must be positive");
        if (bandit.arms < 1) throw ConfigError("arms must be >= 1");
        if (bandit.dim < 1) throw ConfigError("dim must be >= 1");
        const auto grid = sample_sizes();
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (grid[i] < 1 || grid[i] > T) throw ConfigError("n_grid entries must lie in [1, T]");
            if (i > 0 && grid[i] <= grid[i - 1]) throw ConfigError("n_grid must be strictly ascending");
        }
        if (beta_grid.empty() || eta_grid.empty() || sigma_grid.empty() || mode_grid.empty()) {
            throw ConfigError("hyperparameter grids must be nonempty");
        }
        if (kern_cap < 1) throw ConfigError("kern_cap must be >= 1");
        if (batch_size < 1 || epochs < 1) throw ConfigError("batch and epochs must be >= 1");
    }

    /// Canonical key=value dump; merge_text(to_text()) reproduces the config.
    [[nodiscard]] std::string to_text() const {
        std::ostringstream os;
        os.precision(17);
        os << "bandit=" << bandit.kind << "\ndim=" << bandit.dim << "\narms=" << bandit.arms << "\nnoise=" << bandit.noise
           << "\nduplicate=" << (bandit.duplicate ? "true" : "false") << "\n";
        if (!bandit.data.empty()) os << "data=" << bandit.data << "\n";
        if (!bandit.schema.empty()) os << "schema=" << bandit.schema << "\n";
        os << "blob_rows=" << bandit.blob_rows << "\nblob_separation=" << bandit.blob_separation
           << "\ncollect=" << format_collect(collect) << "\nalgos=";
        for (std::size_t i = 0; i < algorithms.size(); ++i) os << (i ? "," : "") << to_string(algorithms[i]);
        os << "\nT=" << T << "\n";
        if (!n_grid.empty()) {
            os << "n_grid=";
            for (std::size_t i = 0; i < n_grid.size(); ++i) os << (i ? "," : "") << n_grid[i];
            os << "\n";
        }
        os << "trials=" << trials << "\nn_te=" << n_te << "\nlambda=" << lambda << "\nbeta=" << hyper.beta
           << "\neta=" << hyper.eta << "\nsigma=" << hyper.sigma << "\nmode=" << to_string(hyper.mode) << "\nL=" << depth
           << "\nm=" << width << "\nlayer_norm=" << (layer_norm ? "true" : "false")
           << "\noptimizer=" << (optimizer == OptimizerKind::Adam ? "adam" : "sgd") << "\nl2=" << l2
           << "\nbatch=" << batch_size << "\nepochs=" << epochs << "\ncovariance="
           << (!covariance ? "auto" : *covariance == CovarianceMode::Full ? "full" : "diag")
           << "\nreturn=" << (return_rule == ReturnRule::Latest ? "latest" : "ensemble") << "\nkern_cap=" << kern_cap
           << "\nseed=" << seed << "\nbeta_grid=" << detail::join_reals(beta_grid)
           << "\neta_grid=" << detail::join_reals(eta_grid) << "\nsigma_grid=" << detail::join_reals(sigma_grid)
           << "\nmode_grid=";
        for (std::size_t i = 0; i < mode_grid.size(); ++i) os << (i ? "," : "") << to_string(mode_grid[i]);
        os << "\ntiming=" << (timing ? "true" : "false") << "\nntk_rounds=" << ntk_rounds << "\nout=" << out << "\n";
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

namespace seeds {

inline std::uint64_t instance(std::uint64_t base) { return mix_seed(base, 1); }
inline std::uint64_t test_contexts(std::uint64_t base) { return mix_seed(base, 2); }
inline std::uint64_t trial(std::uint64_t base, std::size_t i) { return mix_seed(base, 1000 + i); }
inline std::uint64_t search(std::uint64_t base) { return mix_seed(base, 0x5EA2C4); }
inline std::uint64_t data(std::uint64_t run_seed) { return mix_seed(run_seed, 11); }
inline std::uint64_t network(std::uint64_t run_seed) { return mix_seed(run_seed, 12); }

inline void require_disjoint(std::uint64_t base, std::size_t trials) {
    const std::uint64_t s = search(base);
    for (std::size_t i = 0; i < trials; ++i) {
        if (trial(base, i) == s) throw ConfigError("search seed collides with report seed " + std::to_string(i));
    }
}

}  // namespace seeds

// ---------------------------------------------------------------------------
// Bandit construction and data
// ---------------------------------------------------------------------------

/// Schema for the UCI agaricus-lepiota layout: class first, 22 categorical
/// attributes; '?' is kept as its own category.
inline TableSchema mushroom_schema() {
    TableSchema s;
    s.missing = "";
    s.columns.push_back(ColumnSpec{ColumnKind::Label, {"e", "p"}});
    for (int i = 0; i < 22; ++i) s.columns.push_back(ColumnSpec{ColumnKind::Categorical, {}});
    return s;
}

inline BanditInstance build_bandit(const BanditSpec& spec, std::uint64_t seed) {
    BanditInstance b = [&]() {
        if (spec.kind == "h1" || spec.kind == "h2" || spec.kind == "h3") {
            const auto family = spec.kind == "h1" ? SyntheticFamily::H1
                                : spec.kind == "h2" ? SyntheticFamily::H2
                                                    : SyntheticFamily::H3;
            return BanditInstance::synthetic(SyntheticSpec::make(family, spec.dim, seed), spec.arms, spec.noise);
        }
        if (spec.kind == "blobs") {
            const auto blobs = gaussian_blobs(spec.blob_rows, spec.dim, spec.arms, spec.blob_separation, seed);
            return BanditInstance::classification(preprocess_features(blobs.features), blobs.labels, spec.arms, "blobs");
        }
        if (spec.kind == "mushroom") {
            if (spec.data.empty()) throw ConfigError("mushroom bandit needs data=<csv>");
            const TableSchema schema = spec.schema.empty() ? mushroom_schema() : TableSchema::load(spec.schema);
            return mushroom_bandit(load_table(spec.data, schema));
        }
        if (spec.kind.rfind("classify:", 0) == 0) {
            const std::string path = spec.kind.substr(9);
            if (path.empty()) throw ConfigError("classify needs a CSV path");
            const std::string schema = spec.schema.empty() ? path + ".schema.json" : spec.schema;
            const auto table = load_table(path, TableSchema::load(schema));
            return classification_bandit(table, std::filesystem::path(path).stem().string());
        }
        throw ConfigError("unknown bandit '" + spec.kind + "'");
    }();
    if (spec.duplicate) b.with_duplication();
    return b;
}

inline OfflineDataset collect_data(const BanditInstance& instance, std::size_t n, const CollectSpec& spec,
                                   std::uint64_t seed) {
    switch (spec.kind) {
        case BehaviorKind::EpsGreedy: return collect_eps_greedy(instance, n, spec.epsilon, seed);
        case BehaviorKind::Adaptive: return collect_adaptive(instance, n, spec.epsilon, seed);
        case BehaviorKind::External: {
            OfflineDataset d = load_dataset(spec.path);
            if (d.size() < n) throw ConfigError("dataset '" + spec.path + "' has fewer than T records");
            expect_dim(d.num_actions(), instance.num_actions(), "loaded dataset actions");
            expect_dim(static_cast<std::size_t>(d.dim()), static_cast<std::size_t>(instance.dim()), "loaded dataset dim");
            return d.prefix(n);
        }
    }
    throw ConfigError("unsupported collection policy");
}

inline std::vector<Round> sample_test_rounds(const BanditInstance& instance, std::size_t n_te, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Round> rounds;
    rounds.reserve(n_te);
    for (std::size_t i = 0; i < n_te; ++i) rounds.push_back(instance.sample_round(rng));
    return rounds;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Scores a policy's model once on a test set so several betas can be tried.
inline std::vector<ArmScores> score_rounds(const Policy& policy, const std::vector<Round>& rounds) {
    std::vector<ArmScores> out;
    out.reserve(rounds.size());
    for (const auto& r : rounds) out.push_back(policy.score(r.contexts));
    return out;
}

/// Mean of v*(x) - h(x_{pi(x)}) with pi = argmax mean - beta * bonus.
inline double suboptimality(const std::vector<ArmScores>& scores, const std::vector<Round>& rounds, double beta) {
    expect_dim(scores.size(), rounds.size(), "scored rounds");
    if (rounds.empty()) throw ConfigError("empty test set");
    double total = 0.0;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        const std::size_t a = argmax_lowest(scores[i].mean - beta * scores[i].bonus);
        total += optimal_value(rounds[i]) - rounds[i].mean_rewards[static_cast<Eigen::Index>(a)];
    }
    return total / static_cast<double>(rounds.size());
}

inline double evaluate_suboptimality(const Policy& policy, const std::vector<Round>& rounds) {
    if (rounds.empty()) throw ConfigError("empty test set");
    double total = 0.0;
    for (const auto& r : rounds) {
        total += optimal_value(r) - r.mean_rewards[static_cast<Eigen::Index>(policy.act(r.contexts))];
    }
    return total / static_cast<double>(rounds.size());
}

inline double evaluate_suboptimality(const Policy& policy, const BanditInstance& instance, std::size_t n_te,
                                     std::uint64_t seed) {
    return evaluate_suboptimality(policy, sample_test_rounds(instance, n_te, seed));
}

// ---------------------------------------------------------------------------
// Fitting along the sample-size grid
// ---------------------------------------------------------------------------

inline NeuralLearnerConfig neural_config(const ExperimentConfig& cfg, const Hyperparams& h, Eigen::Index input_dim,
                                         std::uint64_t net_seed) {
    NeuralLearnerConfig c;
    c.network = cfg.network(input_dim);
    c.optimizer.kind = cfg.optimizer;
    c.optimizer.learning_rate = h.eta;
    c.optimizer.l2 = cfg.l2;
    c.mode = h.mode;
    c.batch_size = cfg.batch_size;
    c.epochs = cfg.epochs;
    c.lambda = cfg.lambda;
    c.covariance_mode = cfg.covariance;
    c.beta = ConstantBeta{h.beta};
    c.return_rule = cfg.return_rule;
    c.seed = net_seed;
    return c;
}

/// One policy per entry of `grid` (ascending). Online learners continue from
/// their previous state; batch learners refit on each prefix.
inline std::vector<Policy> fit_along_grid(Algorithm algo, const OfflineDataset& data, const std::vector<std::size_t>& grid,
                                          const ExperimentConfig& cfg, const Hyperparams& h, std::uint64_t net_seed) {
    std::vector<Policy> out;
    out.reserve(grid.size());
    const bool neural = algo == Algorithm::NeuralCB || algo == Algorithm::NeuralGreedy;
    if (neural) {
        const auto ncfg = neural_config(cfg, h, data.dim(), net_seed);
        const bool pessimistic = algo == Algorithm::NeuralCB;
        if (cfg.return_rule == ReturnRule::UniformEnsemble) {
            for (std::size_t n : grid) out.push_back(detail::run_neural(data.prefix(n), ncfg, pessimistic));
            return out;
        }
        NeuralLearner learner(ncfg, pessimistic);
        for (std::size_t n : grid) {
            while (learner.steps() + 1 < n) learner.update(data[learner.steps()]);
            out.push_back(learner.current_policy());
        }
        return out;
    }
    std::optional<NetworkParams> init;
    if (algo == Algorithm::NeuralLinLCB || algo == Algorithm::NeuralLinGreedy) {
        init = init_symmetric(cfg.network(data.dim()), net_seed);
    }
    for (std::size_t n : grid) {
        const OfflineDataset prefix = data.prefix(n);
        switch (algo) {
            case Algorithm::LinLCB: out.push_back(linlcb_fit(prefix, cfg.lambda, h.beta)); break;
            case Algorithm::KernLCB: out.push_back(kernlcb_fit(prefix, cfg.lambda, h.beta, h.sigma, cfg.kern_cap)); break;
            case Algorithm::NeuralLinLCB:
                out.push_back(neurallin_fit(prefix, cfg.lambda, h.beta, *init, false, cfg.covariance));
                break;
            case Algorithm::NeuralLinGreedy:
                out.push_back(neurallin_fit(prefix, cfg.lambda, h.beta, *init, true, cfg.covariance));
                break;
            default: break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct ReportRow {
    std::string algo;
    std::size_t n = 0;
    double mean = 0.0;
    double ci_half = 0.0;  // 95% half-width
    std::size_t trials = 0;
    double seconds = 0.0;

    [[nodiscard]] double ci_low() const { return mean - ci_half; }
    [[nodiscard]] double ci_high() const { return mean + ci_half; }
};

struct SubOptReport {
    std::string bandit;
    std::vector<ReportRow> rows;

    [[nodiscard]] const ReportRow* find(const std::string& algo, std::size_t n) const {
        for (const auto& r : rows) {
            if (r.algo == algo && r.n == n) return &r;
        }
        return nullptr;
    }
};

/// Sample mean and 1.96 * (sample std) / sqrt(k); zero width for k = 1.
inline std::pair<double, double> mean_and_ci(const std::vector<double>& xs) {
    if (xs.empty()) throw ConfigError("no samples to aggregate");
    const double k = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= k;
    if (xs.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, 1.96 * std::sqrt(ss / (k - 1.0)) / std::sqrt(k)};
}

using HyperparamTable = std::map<Algorithm, Hyperparams>;

namespace detail {

[[noreturn]] inline void rethrow_with_context(const std::string& where) {
    try {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(where + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(where + ": " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
    }
}

inline std::string context_label(Algorithm a, std::size_t n, std::size_t trial) {
    return std::string("algo=") + to_string(a) + " n=" + std::to_string(n) + " trial=" + std::to_string(trial);
}

}  // namespace detail

/// Repeated seeded trials. The bandit instance and the test contexts are fixed
/// by cfg.seed and shared by every algorithm, trial and sample size; each
/// trial draws its own log and network initialization.
inline SubOptReport run_experiment(const ExperimentConfig& cfg, const HyperparamTable& tuned = {}) {
    cfg.validate();
    using clock = std::chrono::steady_clock;
    const BanditInstance instance = build_bandit(cfg.bandit, seeds::instance(cfg.seed));
    const auto test = sample_test_rounds(instance, cfg.n_te, seeds::test_contexts(cfg.seed));
    const auto grid = cfg.sample_sizes();

    // values[algo][grid index][trial]
    std::vector<std::vector<std::vector<double>>> values(
        cfg.algorithms.size(), std::vector<std::vector<double>>(grid.size()));
    std::vector<std::vector<double>> seconds(cfg.algorithms.size(), std::vector<double>(grid.size(), 0.0));

    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const std::uint64_t run = seeds::trial(cfg.seed, trial);
        const OfflineDataset data = collect_data(instance, cfg.T, cfg.collect, seeds::data(run));
        for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
            const Algorithm algo = cfg.algorithms[ai];
            const auto it = tuned.find(algo);
            const Hyperparams h = it == tuned.end() ? cfg.hyper : it->second;
            std::vector<Policy> policies;
            const auto start = clock::now();
            try {
                policies = fit_along_grid(algo, data, grid, cfg, h, seeds::network(run));
            } catch (...) {
                detail::rethrow_with_context(detail::context_label(algo, cfg.T, trial));
            }
            const double fit_seconds = std::chrono::duration<double>(clock::now() - start).count();
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                try {
                    values[ai][gi].push_back(evaluate_suboptimality(policies[gi], test));
                } catch (...) {
                    detail::rethrow_with_context(detail::context_label(algo, grid[gi], trial));
                }
                // cumulative fit time, attributed evenly along the grid
                seconds[ai][gi] += fit_seconds * static_cast<double>(gi + 1) / static_cast<double>(grid.size());
            }
        }
    }

    SubOptReport report;
    report.bandit = instance.name();
    for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const auto [mean, half] = mean_and_ci(values[ai][gi]);
            report.rows.push_back(ReportRow{to_string(cfg.algorithms[ai]), grid[gi], mean, half, cfg.trials,
                                            cfg.timing ? seconds[ai][gi] / static_cast<double>(cfg.trials) : 0.0});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridPoint {
    Algorithm algo;
    Hyperparams hyper;
    double subopt;
};

struct GridSearchResult {
    HyperparamTable best;
    std::vector<GridPoint> evaluated;  // in grid order
};

/// Evaluates every grid point on one dedicated search run (its own log,
/// network seed and test contexts, disjoint from the report trials) at n = T.
/// Grid order is mode, then eta, then sigma, then beta; ties keep the first.
inline GridSearchResult grid_search(const ExperimentConfig& cfg) {
    cfg.validate();
    seeds::require_disjoint(cfg.seed, cfg.trials);
    const std::uint64_t run = seeds::search(cfg.seed);
    const BanditInstance instance = build_bandit(cfg.bandit, seeds::instance(cfg.seed));
    const auto test = sample_test_rounds(instance, cfg.n_te, seeds::test_contexts(run));
    const OfflineDataset data = collect_data(instance, cfg.T, cfg.collect, seeds::data(run));
    const std::vector<std::size_t> last{cfg.T};

    GridSearchResult result;
    for (Algorithm algo : cfg.algorithms) {
        const bool neural = algo == Algorithm::NeuralCB || algo == Algorithm::NeuralGreedy;
        const bool uses_beta = algo == Algorithm::NeuralCB || algo == Algorithm::LinLCB || algo == Algorithm::KernLCB ||
                               algo == Algorithm::NeuralLinLCB;
        const std::vector<TrainMode> modes = neural ? cfg.mode_grid : std::vector{cfg.hyper.mode};
        const std::vector<double> etas = neural ? cfg.eta_grid : std::vector{cfg.hyper.eta};
        const std::vector<double> sigmas = algo == Algorithm::KernLCB ? cfg.sigma_grid : std::vector{cfg.hyper.sigma};
        const std::vector<double> betas = uses_beta ? cfg.beta_grid : std::vector{0.0};

        std::optional<GridPoint> best;
        for (TrainMode mode : modes) {
            for (double eta : etas) {
                for (double sigma : sigmas) {
                    Hyperparams h = cfg.hyper;
                    h.mode = mode;
                    h.eta = eta;
                    h.sigma = sigma;
                    std::vector<ArmScores> scores;
                    try {
                        // training never reads beta, so one fit serves the whole beta grid
                        const Policy p = fit_along_grid(algo, data, last, cfg, h, seeds::network(run)).front();
                        scores = score_rounds(p, test);
                    } catch (...) {
                        detail::rethrow_with_context("grid search " + detail::context_label(algo, cfg.T, 0));
                    }
                    for (double beta : betas) {
                        h.beta = beta;
                        const GridPoint gp{algo, h, suboptimality(scores, test, beta)};
                        result.evaluated.push_back(gp);
                        if (!best || gp.subopt < best->subopt) best = gp;
                    }
                }
            }
        }
        result.best[algo] = best->hyper;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline std::string format6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

inline constexpr const char* kResultsHeader = "algo,n,mean_subopt,ci_low,ci_high,trials,seconds";

inline void write_results_csv(std::ostream& os, const SubOptReport& report) {
    os << kResultsHeader << "\n";
    for (const auto& r : report.rows) {
        os << r.algo << "," << r.n << "," << format6(r.mean) << "," << format6(r.ci_low()) << ","
           << format6(r.ci_high()) << "," << r.trials << "," << format6(r.seconds) << "\n";
    }
}

inline SubOptReport read_results_csv(std::istream& is, std::string bandit = {}) {
    SubOptReport report;
    report.bandit = std::move(bandit);
    std::string line;
    if (!std::getline(is, line) || detail::trim_ws(line) != kResultsHeader) {
        throw ConfigError("results file lacks the expected header");
    }
    std::size_t no = 1;
    while (std::getline(is, line)) {
        ++no;
        if (detail::trim_ws(line).empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 7) throw ConfigError("results line " + std::to_string(no) + ": expected 7 fields");
        ReportRow r;
        r.algo = cells[0];
        r.n = detail::parse_unsigned("n", cells[1]);
        r.mean = detail::parse_real("mean_subopt", cells[2]);
        const double lo = detail::parse_real("ci_low", cells[3]);
        const double hi = detail::parse_real("ci_high", cells[4]);
        r.ci_half = (hi - lo) / 2.0;
        r.trials = detail::parse_unsigned("trials", cells[5]);
        r.seconds = detail::parse_real("seconds", cells[6]);
        report.rows.push_back(r);
    }
    return report;
}

inline void write_grid_csv(std::ostream& os, const GridSearchResult& g) {
    os << "algo,mode,eta,sigma,beta,mean_subopt,selected\n";
    for (const auto& p : g.evaluated) {
        const bool selected = g.best.at(p.algo) == p.hyper;
        os << to_string(p.algo) << "," << to_string(p.hyper.mode) << "," << format6(p.hyper.eta) << ","
           << format6(p.hyper.sigma) << "," << format6(p.hyper.beta) << "," << format6(p.subopt) << ","
           << (selected ? 1 : 0) << "\n";
    }
}

/// Line chart of mean sub-optimality against n, one shaded CI band per algorithm.
inline void write_svg_chart(std::ostream& os, const SubOptReport& report) {
    constexpr double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 50;
    constexpr std::array<const char*, 6> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::vector<std::string> algos;
    double x_max = 1.0, y_max = 0.0, y_min = 0.0;
    for (const auto& r : report.rows) {
        if (std::find(algos.begin(), algos.end(), r.algo) == algos.end()) algos.push_back(r.algo);
        x_max = std::max(x_max, static_cast<double>(r.n));
        y_max = std::max(y_max, r.ci_high());
        y_min = std::min(y_min, r.ci_low());
    }
    if (y_max <= y_min) y_max = y_min + 1.0;
    const double pw = W - left - right, ph = H - top - bottom;
    auto sx = [&](double n) { return left + pw * n / x_max; };
    auto sy = [&](double v) { return top + ph * (1.0 - (v - y_min) / (y_max - y_min)); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << left << "\" y=\"24\" font-size=\"14\">" << report.bandit << ": sub-optimality vs n</text>\n"
       << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x_max * i / 4.0, yv = y_min + (y_max - y_min) * i / 4.0;
        os << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << format6(xv)
           << "</text>\n<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << format6(yv)
           << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">n</text>\n";
    for (std::size_t k = 0; k < algos.size(); ++k) {
        const char* color = palette[k % palette.size()];
        std::vector<const ReportRow*> rows;
        for (const auto& r : report.rows) {
            if (r.algo == algos[k]) rows.push_back(&r);
        }
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->n < b->n; });
        std::ostringstream band, line;
        for (auto* r : rows) band << sx(static_cast<double>(r->n)) << "," << sy(r->ci_high()) << " ";
        for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
            band << sx(static_cast<double>((*it)->n)) << "," << sy((*it)->ci_low()) << " ";
        }
        for (auto* r : rows) line << sx(static_cast<double>(r->n)) << "," << sy(r->mean) << " ";
        os << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
           << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        for (auto* r : rows) {
            os << "<circle cx=\"" << sx(static_cast<double>(r->n)) << "\" cy=\"" << sy(r->mean) << "\" r=\"3\" fill=\""
               << color << "\"/>\n";
        }
        const double ly = top + 16.0 * static_cast<double>(k);
        os << "<rect x=\"" << left + pw + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"" << color
           << "\"/>\n<text x=\"" << left + pw + 30 << "\" y=\"" << ly + 10 << "\">" << algos[k] << "</text>\n";
    }
    os << "</svg>\n";
}

/// Writes <dir>/results.csv and <dir>/subopt_<bandit>.svg.
inline void emit_outputs(const SubOptReport& report, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
    const auto csv_path = std::filesystem::path(dir) / "results.csv";
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write '" + csv_path.string() + "'");
    write_results_csv(csv, report);
    if (!csv) throw std::runtime_error("write failed for '" + csv_path.string() + "'");

    std::string stem = report.bandit.empty() ? "bandit" : report.bandit;
    std::replace_if(stem.begin(), stem.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
    const auto svg_path = std::filesystem::path(dir) / ("subopt_" + stem + ".svg");
    std::ofstream svg(svg_path, std::ios::binary);
    if (!svg) throw std::runtime_error("cannot write '" + svg_path.string() + "'");
    write_svg_chart(svg, report);
    if (!svg) throw std::runtime_error("write failed for '" + svg_path.string() + "'");
}

// ---------------------------------------------------------------------------
// NTK diagnostics
// ---------------------------------------------------------------------------

struct NtkSummary {
    double lambda0 = 0.0;
    double effective_dim = 0.0;
    std::size_t nk = 0;
    double lambda = 0.0;
};

/// lambda_0 and effective dimension of the NTK over every arm of the first
/// `rounds` logged contexts.
inline NtkSummary ntk_summary(const OfflineDataset& data, std::size_t rounds, int depth, double lambda) {
    if (data.empty()) throw ConfigError("NTK diagnostics need data");
    const std::size_t n = std::min(rounds, data.size());
    const auto k = static_cast<Eigen::Index>(data.num_actions());
    Matrix contexts(static_cast<Eigen::Index>(n) * k, data.dim());
    for (std::size_t t = 0; t < n; ++t) contexts.middleRows(static_cast<Eigen::Index>(t) * k, k) = data[t].contexts;
    const NtkGram g = ntk_gram(contexts, depth);
    return NtkSummary{min_eigenvalue(g.H), effective_dim(g.H, lambda, n, data.num_actions()),
                      n * data.num_actions(), lambda};
}

}  // namespace banditlab
