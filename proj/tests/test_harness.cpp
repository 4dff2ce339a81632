#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "banditlab/harness.hpp"

using namespace banditlab;

namespace {

// Scores actions by looking up the true class of the context; sign flips
// turn it into the worst policy.
class LabelLookupModel final : public ScoreModel {
public:
    LabelLookupModel(const Matrix& features, const std::vector<std::size_t>& labels, double sign)
        : d_(features.cols()), sign_(sign) {
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            const Vector row = features.row(i).transpose();
            labels_[std::vector<double>(row.data(), row.data() + row.size())] = labels[static_cast<std::size_t>(i)];
        }
    }

    ArmScores score(const FullContext& contexts) const override {
        const Vector x = contexts.row(0).head(d_).transpose();
        const std::size_t label = labels_.at(std::vector<double>(x.data(), x.data() + x.size()));
        ArmScores s{Vector::Zero(contexts.rows()), Vector::Zero(contexts.rows())};
        s.mean[static_cast<Eigen::Index>(label)] = sign_;
        return s;
    }

private:
    Eigen::Index d_;
    double sign_;
    std::map<std::vector<double>, std::size_t> labels_;
};

class RandomScoreModel final : public ScoreModel {
public:
    explicit RandomScoreModel(std::uint64_t seed) : rng_(seed) {}
    ArmScores score(const FullContext& contexts) const override {
        ArmScores s{Vector(contexts.rows()), Vector::Zero(contexts.rows())};
        for (Eigen::Index a = 0; a < s.mean.size(); ++a) s.mean[a] = standard_normal(rng_);
        return s;
    }

private:
    mutable Rng rng_;
};

struct SevenClasses {
    LabeledData data = gaussian_blobs(400, 4, 7, 3.0, 9);
    BanditInstance instance = BanditInstance::classification(data.features, data.labels, 7, "seven");
};

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.bandit.kind = "h1";
    c.bandit.dim = 4;
    c.bandit.arms = 3;
    c.T = 60;
    c.n_grid = {20, 60};
    c.trials = 2;
    c.n_te = 100;
    c.width = 8;
    c.epochs = 3;
    c.batch_size = 10;
    c.algorithms = {Algorithm::NeuralCB, Algorithm::NeuralGreedy, Algorithm::LinLCB, Algorithm::KernLCB,
                    Algorithm::NeuralLinLCB, Algorithm::NeuralLinGreedy};
    return c;
}

std::string csv_of(const SubOptReport& r) {
    std::ostringstream os;
    write_results_csv(os, r);
    return os.str();
}

}  // namespace

TEST(Evaluation, OracleRandomAndWorstPolicies) {
    const SevenClasses s;
    const auto test = sample_test_rounds(s.instance, 5000, 3);
    const Policy oracle(std::make_shared<LabelLookupModel>(s.data.features, s.data.labels, 1.0), 0.0, "oracle");
    const Policy worst(std::make_shared<LabelLookupModel>(s.data.features, s.data.labels, -1.0), 0.0, "worst");
    const Policy random(std::make_shared<RandomScoreModel>(5), 0.0, "random");
    EXPECT_EQ(evaluate_suboptimality(oracle, test), 0.0);
    EXPECT_DOUBLE_EQ(evaluate_suboptimality(worst, test), 1.0);
    EXPECT_NEAR(evaluate_suboptimality(random, test), 6.0 / 7.0, 0.02);
}

TEST(Evaluation, ScoredSuboptimalityMatchesPolicy) {
    ExperimentConfig c = small_config();
    const auto instance = build_bandit(c.bandit, 1);
    const auto test = sample_test_rounds(instance, 200, 2);
    const auto data = collect_data(instance, 60, c.collect, 3);
    const Policy p = linlcb_fit(data, 0.1, 0.0);
    const auto scores = score_rounds(p, test);
    for (double beta : {0.0, 0.5, 3.0}) {
        EXPECT_DOUBLE_EQ(suboptimality(scores, test, beta), evaluate_suboptimality(p.with_beta(beta), test));
    }
    EXPECT_THROW(evaluate_suboptimality(p, std::vector<Round>{}), ConfigError);
}

TEST(Aggregate, MeanAndInterval) {
    const auto [m1, h1] = mean_and_ci({0.3});
    EXPECT_EQ(m1, 0.3);
    EXPECT_EQ(h1, 0.0);
    const auto [m, h] = mean_and_ci({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(h, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-12);
    EXPECT_THROW(mean_and_ci({}), ConfigError);
}

TEST(RunExperiment, SingleTrialHasZeroWidth) {
    ExperimentConfig c = small_config();
    c.trials = 1;
    c.algorithms = {Algorithm::LinLCB};
    const auto r = run_experiment(c);
    ASSERT_EQ(r.rows.size(), 2u);
    for (const auto& row : r.rows) {
        EXPECT_EQ(row.ci_low(), row.mean);
        EXPECT_EQ(row.ci_high(), row.mean);
    }
}

TEST(RunExperiment, IdenticalConfigGivesIdenticalBytes) {
    const ExperimentConfig c = small_config();
    const std::string a = csv_of(run_experiment(c));
    const std::string b = csv_of(run_experiment(c));
    EXPECT_EQ(a, b);
    ExperimentConfig other = c;
    other.seed = 1;
    EXPECT_NE(a, csv_of(run_experiment(other)));
}

TEST(RunExperiment, RowsCoverGridAndIntervalsBracketMean) {
    const ExperimentConfig c = small_config();
    const auto r = run_experiment(c);
    EXPECT_EQ(r.rows.size(), c.algorithms.size() * c.n_grid.size());
    for (Algorithm a : c.algorithms) {
        for (std::size_t n : c.n_grid) {
            const ReportRow* row = r.find(to_string(a), n);
            ASSERT_NE(row, nullptr);
            EXPECT_LE(row->ci_low(), row->mean);
            EXPECT_LE(row->mean, row->ci_high());
            EXPECT_GE(row->mean, -1e-12);
            EXPECT_EQ(row->trials, c.trials);
            EXPECT_EQ(row->seconds, 0.0);
        }
    }
}

TEST(FitAlongGrid, OnlineLearnerMatchesFreshRuns) {
    ExperimentConfig c = small_config();
    const auto instance = build_bandit(c.bandit, 4);
    const auto data = collect_data(instance, 60, c.collect, 5);
    const auto test = sample_test_rounds(instance, 50, 6);
    Hyperparams h;
    h.mode = TrainMode::B;
    const auto along = fit_along_grid(Algorithm::NeuralCB, data, {20, 60}, c, h, 7);
    const auto alone = fit_along_grid(Algorithm::NeuralCB, data.prefix(20), {20}, c, h, 7);
    for (const auto& r : test) EXPECT_EQ(along[0].lcb(r.contexts), alone[0].lcb(r.contexts));
}

TEST(GridSearch, SinglePointGridSelectsIt) {
    ExperimentConfig c = small_config();
    c.algorithms = {Algorithm::NeuralCB, Algorithm::KernLCB};
    c.beta_grid = {0.3};
    c.eta_grid = {0.01};
    c.sigma_grid = {2.0};
    c.mode_grid = {TrainMode::B};
    const auto g = grid_search(c);
    EXPECT_EQ(g.evaluated.size(), 2u);
    EXPECT_EQ(g.best.at(Algorithm::NeuralCB).beta, 0.3);
    EXPECT_EQ(g.best.at(Algorithm::NeuralCB).eta, 0.01);
    EXPECT_EQ(g.best.at(Algorithm::NeuralCB).mode, TrainMode::B);
    EXPECT_EQ(g.best.at(Algorithm::KernLCB).sigma, 2.0);
}

TEST(GridSearch, DefaultGridsAndSelection) {
    ExperimentConfig c = small_config();
    EXPECT_EQ(c.beta_grid.size(), 6u);
    c.algorithms = {Algorithm::LinLCB, Algorithm::NeuralLinGreedy};
    const auto g = grid_search(c);
    // greedy variants have no beta to tune
    EXPECT_EQ(g.evaluated.size(), 6u + 1u);
    double best = 1e300;
    for (const auto& p : g.evaluated) {
        if (p.algo == Algorithm::LinLCB) best = std::min(best, p.subopt);
    }
    for (const auto& p : g.evaluated) {
        if (p.algo == Algorithm::LinLCB && p.hyper == g.best.at(Algorithm::LinLCB)) {
            EXPECT_EQ(p.subopt, best);
            break;
        }
    }
}

TEST(Seeds, SearchSeedDisjointFromReportSeeds) {
    for (std::uint64_t base : {0ull, 1ull, 42ull, 123456789ull}) {
        EXPECT_NO_THROW(seeds::require_disjoint(base, 1000));
        EXPECT_NE(seeds::test_contexts(base), seeds::test_contexts(seeds::search(base)));
    }
}

TEST(Output, EmptyReportIsHeaderOnly) {
    EXPECT_EQ(csv_of(SubOptReport{}), std::string(kResultsHeader) + "\n");
}

TEST(Output, CsvRoundTrip) {
    SubOptReport r;
    r.bandit = "h1";
    r.rows.push_back(ReportRow{"linlcb", 100, 0.25, 0.125, 5, 0.0});
    r.rows.push_back(ReportRow{"neuralcb", 2000, 0.0123456, 0.0025, 5, 1.5});
    std::istringstream is(csv_of(r));
    const auto back = read_results_csv(is, "h1");
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].algo, "neuralcb");
    EXPECT_EQ(back.rows[1].n, 2000u);
    EXPECT_DOUBLE_EQ(back.rows[1].mean, 0.0123456);
    EXPECT_NEAR(back.rows[1].ci_half, 0.0025, 1e-7);
    EXPECT_EQ(csv_of(back), csv_of(r));
    std::istringstream bad("algo,n\n");
    EXPECT_THROW(read_results_csv(bad), ConfigError);
}

TEST(Output, EmitWritesCsvAndChart) {
    SubOptReport r;
    r.bandit = "h1";
    r.rows.push_back(ReportRow{"linlcb", 10, 0.5, 0.1, 2, 0.0});
    r.rows.push_back(ReportRow{"linlcb", 20, 0.4, 0.1, 2, 0.0});
    const auto dir = std::filesystem::temp_directory_path() / "banditlab_emit_test";
    std::filesystem::remove_all(dir);
    emit_outputs(r, dir.string());
    EXPECT_TRUE(std::filesystem::exists(dir / "results.csv"));
    std::ifstream svg(dir / "subopt_h1.svg");
    std::stringstream ss;
    ss << svg.rdbuf();
    EXPECT_NE(ss.str().find("<svg"), std::string::npos);
    EXPECT_NE(ss.str().find("polygon"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(Config, ParsesTextAndRoundTrips) {
    ExperimentConfig c;
    std::istringstream is("# comment\nbandit = h3\nalgos = neuralcb,linlcb\nT=500\nn_grid=100,500\n"
                          "collect=adaptive:0.5\nmode=b\ncovariance=full\nbeta_grid=0.1,1\n");
    c.merge_text(is);
    EXPECT_EQ(c.bandit.kind, "h3");
    EXPECT_EQ(c.algorithms.size(), 2u);
    EXPECT_EQ(c.T, 500u);
    EXPECT_EQ(c.collect.kind, BehaviorKind::Adaptive);
    EXPECT_EQ(c.hyper.mode, TrainMode::B);
    EXPECT_EQ(c.covariance, CovarianceMode::Full);
    EXPECT_NO_THROW(c.validate());
    ExperimentConfig back;
    std::istringstream dump(c.to_text());
    back.merge_text(dump);
    EXPECT_EQ(back.to_text(), c.to_text());
}

TEST(Config, EnvironmentOverrides) {
    ExperimentConfig c;
    const std::map<std::string, std::string> env{{"BANDITLAB_BETA", "0.7"}, {"BANDITLAB_T", "123"},
                                                 {"BANDITLAB_ALGOS", "all"}};
    c.merge_env([&](const char* name) -> const char* {
        const auto it = env.find(name);
        return it == env.end() ? nullptr : it->second.c_str();
    });
    EXPECT_EQ(c.hyper.beta, 0.7);
    EXPECT_EQ(c.T, 123u);
    EXPECT_EQ(c.algorithms.size(), kAllAlgorithms.size());
    EXPECT_THROW(c.merge_env([](const char* n) -> const char* {
        return std::string(n) == "BANDITLAB_TRIALS" ? "-3" : nullptr;
    }), ConfigError);
}

TEST(Config, Errors) {
    ExperimentConfig c;
    EXPECT_THROW(c.set("nope", "1"), ConfigError);
    EXPECT_THROW(c.set("T", "abc"), ConfigError);
    EXPECT_THROW(c.set("algos", "magic"), ConfigError);
    EXPECT_THROW(c.set("collect", "eps:2"), ConfigError);
    EXPECT_THROW(c.set("collect", "eps"), ConfigError);
    EXPECT_THROW(c.set("mode", "x"), ConfigError);
    std::istringstream no_eq("bandit h1\n");
    EXPECT_THROW(c.merge_text(no_eq), ConfigError);
    ExperimentConfig bad;
    bad.n_grid = {100, 50};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.n_grid = {5000};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.lambda = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    ExperimentConfig unknown;
    unknown.bandit.kind = "nothing";
    EXPECT_THROW(build_bandit(unknown.bandit, 0), ConfigError);
    unknown.bandit.kind = "mushroom";
    EXPECT_THROW(build_bandit(unknown.bandit, 0), ConfigError);
}

TEST(RunExperiment, ErrorsCarryContext) {
    ExperimentConfig c = small_config();
    c.bandit.dim = 3;  // symmetric init needs an even input dimension
    c.algorithms = {Algorithm::NeuralCB};
    try {
        run_experiment(c);
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("algo=neuralcb"), std::string::npos) << e.what();
    }
}

TEST(Ntk, SummaryOnLoggedContexts) {
    ExperimentConfig c = small_config();
    const auto instance = build_bandit(c.bandit, 1);
    const auto data = collect_data(instance, 20, c.collect, 2);
    const auto s = ntk_summary(data, 10, 2, 0.1);
    EXPECT_EQ(s.nk, 30u);
    EXPECT_GT(s.lambda0, 0.0);
    EXPECT_GT(s.effective_dim, 0.0);
    EXPECT_LE(s.effective_dim, 30.0);
}
