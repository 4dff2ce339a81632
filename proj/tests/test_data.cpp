#include <sstream>

#include <gtest/gtest.h>

#include "banditlab/data.hpp"

using namespace banditlab;

namespace {

BanditInstance h1_bandit(std::size_t k, Eigen::Index d = 5) {
    return BanditInstance::synthetic(SyntheticSpec::make(SyntheticFamily::H1, d, 3), k);
}

BanditInstance blob_bandit(std::size_t k = 3) {
    const auto blobs = gaussian_blobs(300, 4, k, 2.0, 5);
    return BanditInstance::classification(preprocess_features(blobs.features), blobs.labels, k);
}

// Replays the contexts of the log and reports whether each action was optimal.
std::size_t count_optimal(const OfflineDataset& data, const BanditInstance& bandit) {
    std::size_t hits = 0;
    for (const auto& rec : data) {
        hits += std::abs(optimal_value(bandit, rec.contexts) -
                         synthetic_reward(std::get<BanditInstance::Synthetic>(bandit.impl()).spec, rec.chosen())) == 0.0;
    }
    return hits;
}

}  // namespace

TEST(EpsGreedy, ZeroEpsilonAlwaysOptimal) {
    const auto bandit = h1_bandit(5);
    const auto data = collect_eps_greedy(bandit, 500, 0.0, 1);
    EXPECT_EQ(data.size(), 500u);
    EXPECT_EQ(count_optimal(data, bandit), 500u);
}

TEST(EpsGreedy, FullEpsilonIsUniform) {
    const std::size_t k = 4;
    const auto bandit = blob_bandit(k);
    const std::size_t n = 100000;
    const auto data = collect_eps_greedy(bandit, n, 1.0, 2);
    std::vector<double> counts(k, 0.0);
    for (const auto& r : data) counts[r.action] += 1.0;
    const double p = 1.0 / static_cast<double>(k);
    const double sd = std::sqrt(static_cast<double>(n) * p * (1 - p));
    for (double c : counts) EXPECT_LT(std::abs(c - n * p), 3.0 * sd);
}

TEST(EpsGreedy, OptimalFrequencyMatchesMixture) {
    const std::size_t k = 30;
    const std::size_t n = 100000;
    const auto bandit = h1_bandit(k, 4);
    const auto data = collect_eps_greedy(bandit, n, 0.1, 3);
    const double p = 0.9 + 0.1 / 30.0;
    EXPECT_NEAR(p, 0.903333, 1e-6);
    const double freq = static_cast<double>(count_optimal(data, bandit)) / n;
    EXPECT_LT(std::abs(freq - p), 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(EpsGreedy, Replayable) {
    const auto bandit = h1_bandit(3);
    std::stringstream a, b;
    write_dataset(a, collect_eps_greedy(bandit, 200, 0.3, 9));
    write_dataset(b, collect_eps_greedy(bandit, 200, 0.3, 9));
    EXPECT_EQ(a.str(), b.str());
    std::stringstream c;
    write_dataset(c, collect_eps_greedy(bandit, 200, 0.3, 10));
    EXPECT_NE(a.str(), c.str());
}

TEST(EpsGreedy, CoverageLowerBound) {
    const std::size_t k = 5;
    const double eps = 0.1;
    const auto bandit = h1_bandit(k);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto data = collect_eps_greedy(bandit, 100 * k, eps, seed);
        std::vector<double> counts(k, 0.0);
        for (const auto& r : data) counts[r.action] += 1.0;
        for (double c : counts) EXPECT_GE(c / data.size(), eps / (2.0 * k));
    }
}

TEST(EpsGreedy, NoiselessRewardsAreExact) {
    const auto bandit = blob_bandit();
    const auto data = collect_eps_greedy(bandit, 300, 0.5, 4);
    for (const auto& r : data) EXPECT_TRUE(r.reward == 0.0 || r.reward == 1.0);
    // In block contexts, the chosen block is nonzero exactly where the action lives.
    for (const auto& r : data) {
        const auto d = 4;
        EXPECT_GT(r.chosen().segment(static_cast<Eigen::Index>(r.action) * d, d).norm(), 0.0);
    }
}

TEST(EpsGreedy, RejectsBadEpsilon) {
    const auto bandit = h1_bandit(2);
    EXPECT_THROW(collect_eps_greedy(bandit, 10, -0.1, 0), ConfigError);
    EXPECT_THROW(collect_eps_greedy(bandit, 10, 1.5, 0), ConfigError);
    EXPECT_THROW(collect_adaptive(bandit, 10, 2.0, 0), ConfigError);
}

TEST(Adaptive, ZeroEpsilonIsOptimalLogging) {
    const auto bandit = h1_bandit(4);
    const auto data = collect_adaptive(bandit, 300, 0.0, 5);
    EXPECT_EQ(count_optimal(data, bandit), 300u);
}

TEST(Adaptive, FullEpsilonReplaysLinUcbBatchRefit) {
    const auto bandit = h1_bandit(4);
    const double lambda = 0.1, alpha = 1.0;
    const auto data = collect_adaptive(bandit, 120, 1.0, 6, alpha, lambda);
    const Eigen::Index d = bandit.dim();
    Matrix gram = lambda * Matrix::Identity(d, d);
    Vector b = Vector::Zero(d);
    for (const auto& rec : data) {
        // batch ridge refit on everything before this record
        const Matrix inv = gram.inverse();
        const Vector theta = inv * b;
        Vector ucb(rec.contexts.rows());
        for (Eigen::Index a = 0; a < ucb.size(); ++a) {
            const Vector x = rec.contexts.row(a).transpose();
            ucb[a] = theta.dot(x) + alpha * std::sqrt(x.dot(inv * x));
        }
        EXPECT_EQ(rec.action, argmax_lowest(ucb));
        const Vector x = rec.chosen();
        gram += x * x.transpose();
        b += rec.reward * x;
    }
}

TEST(Adaptive, ActionsDependOnHistory) {
    // Feed a LinUCB learner the same late contexts after two differently
    // ordered prefixes; the decisions must diverge somewhere.
    const auto bandit = h1_bandit(4);
    const auto data = collect_adaptive(bandit, 200, 1.0, 7);
    LinUcb forward(bandit.dim()), shuffled(bandit.dim());
    const std::size_t prefix = 100;
    for (std::size_t t = 0; t < prefix; ++t) forward.update(data[t].chosen(), data[t].reward);
    // Permuted prefix with rewards reassigned to break symmetry of the sufficient statistics.
    for (std::size_t t = 0; t < prefix; ++t) {
        const auto& rec = data[prefix - 1 - t];
        shuffled.update(rec.chosen(), data[t].reward);
    }
    bool differs = false;
    for (std::size_t t = prefix; t < data.size(); ++t) differs |= forward.act(data[t].contexts) != shuffled.act(data[t].contexts);
    EXPECT_TRUE(differs);

    // And the collector's own trajectory changes with the history it saw.
    const auto other = collect_adaptive(bandit, 200, 1.0, 8);
    bool traj_differs = false;
    for (std::size_t t = 0; t < 200; ++t) traj_differs |= data[t].action != other[t].action;
    EXPECT_TRUE(traj_differs);
}

TEST(Kappa, ClosedForms) {
    const auto k1 = compute_kappa({BehaviorKind::EpsGreedy, 0.1, 0}, 30);
    ASSERT_TRUE(k1);
    EXPECT_NEAR(k1->value, 1.0 / (0.9 + 0.1 / 30.0), 1e-15);
    EXPECT_NEAR(k1->value, 1.10701, 1e-5);
    EXPECT_FALSE(k1->upper_bound);
    const auto k0 = compute_kappa({BehaviorKind::EpsGreedy, 0.0, 0}, 7);
    EXPECT_EQ(k0->value, 1.0);
    const auto ka = compute_kappa({BehaviorKind::Adaptive, 0.9, 0}, 10);
    ASSERT_TRUE(ka);
    EXPECT_NEAR(ka->value, 10.0, 1e-12);
    EXPECT_TRUE(ka->upper_bound);
    EXPECT_FALSE(compute_kappa({BehaviorKind::External, 0.0, 0}, 3));
    EXPECT_FALSE(compute_kappa({BehaviorKind::Adaptive, 1.0, 0}, 3));
}

TEST(Dataset, RoundTrip) {
    const auto data = collect_eps_greedy(h1_bandit(3), 50, 0.2, 11);
    std::stringstream ss;
    write_dataset(ss, data);
    const auto back = read_dataset(ss);
    ASSERT_EQ(back.size(), data.size());
    EXPECT_EQ(back.num_actions(), 3u);
    EXPECT_EQ(back.dim(), 5);
    EXPECT_EQ(back.behavior().kind, BehaviorKind::EpsGreedy);
    EXPECT_EQ(back.behavior().epsilon, 0.2);
    EXPECT_EQ(back.behavior().seed, 11u);
    for (std::size_t i = 0; i < data.size(); ++i) {
        EXPECT_EQ(back[i].contexts, data[i].contexts);
        EXPECT_EQ(back[i].action, data[i].action);
        EXPECT_EQ(back[i].reward, data[i].reward);
    }
}

TEST(Dataset, PushBackValidates) {
    OfflineDataset data(2, 3);
    EXPECT_THROW(data.push_back(Record{FullContext::Zero(2, 4), 0, 0.0}), DimensionError);
    EXPECT_THROW(data.push_back(Record{FullContext::Zero(3, 3), 0, 0.0}), DimensionError);
    EXPECT_THROW(data.push_back(Record{FullContext::Zero(2, 3), 2, 0.0}), DimensionError);
    data.push_back(Record{FullContext::Zero(2, 3), 1, 0.5});
    EXPECT_EQ(data.prefix(10).size(), 1u);
    EXPECT_EQ(data.prefix(0).size(), 0u);
}

TEST(Table, ToyCsvEncoding) {
    std::istringstream csv("1.5,a,yes\n2,b,no\n-3,a,yes\n");
    const auto schema = TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["num", "cat:a|b", "label"]})"));
    const auto t = load_table(csv, schema);
    ASSERT_EQ(t.features.rows(), 3);
    ASSERT_EQ(t.features.cols(), 3);
    Matrix expected(3, 3);
    expected << 1.5, 1, 0, 2, 0, 1, -3, 1, 0;
    EXPECT_EQ(t.features, expected);
    EXPECT_EQ(t.num_classes(), 2u);
    EXPECT_EQ(t.class_names[t.labels[0]], "yes");
    EXPECT_EQ(t.class_names[t.labels[1]], "no");
}

TEST(Table, HeaderSkipAndMissing) {
    std::istringstream csv("x,c,y\n1,a,p\n?,b,e\n3,b,e\n");
    auto schema = TableSchema::from_json(
        nlohmann::json::parse(R"({"header": true, "drop_missing": true, "columns": ["num", "skip", "label"]})"));
    const auto t = load_table(csv, schema);
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.features.cols(), 1);
    EXPECT_EQ(t.features(1, 0), 3.0);

    std::istringstream again("x,c,y\n1,a,p\n?,b,e\n");
    schema.drop_missing = false;
    try {
        load_table(again, schema);
        FAIL() << "missing value accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Table, ErrorsCarryLineNumbers) {
    const auto schema = TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["num", "cat:a|b", "label"]})"));
    auto expect_line = [&](const std::string& text, const std::string& where) {
        std::istringstream is(text);
        try {
            load_table(is, schema);
            FAIL() << "accepted: " << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
        }
    };
    expect_line("1,a,x\n2,a\n", "line 2");
    expect_line("1,a,x\nzz,a,y\n", "line 2");
    expect_line("1,a,x\n1,b,x\n1,c,x\n", "line 3");
}

TEST(Table, SchemaValidation) {
    EXPECT_THROW(TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["num"]})")), ConfigError);
    EXPECT_THROW(TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["num", "label", "label"]})")), ConfigError);
    EXPECT_THROW(TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["real", "label"]})")), ConfigError);
}

TEST(Table, MushroomFromTable) {
    std::istringstream csv("e,x,s\np,x,y\ne,b,s\np,b,y\n");
    const auto schema = TableSchema::from_json(nlohmann::json::parse(R"({"columns": ["label", "cat", "cat"]})"));
    const auto t = load_table(csv, schema);
    EXPECT_EQ(t.features.cols(), 4);
    const auto bandit = mushroom_bandit(t);
    EXPECT_EQ(bandit.num_actions(), 2u);
    EXPECT_EQ(bandit.dim(), 8);
    const auto cls = classification_bandit(t, "toy");
    EXPECT_EQ(cls.num_actions(), 2u);
    EXPECT_EQ(cls.name(), "toy");
}
