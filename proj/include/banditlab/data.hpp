#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "banditlab/bandits.hpp"
#include "banditlab/dataset.hpp"
#include "banditlab/policies.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

/// Logs n rounds from an epsilon-greedy policy on the true mean reward:
/// with probability epsilon a uniform action (the greedy one included),
/// otherwise argmax_a h(x_a) with ties to the lowest index.
inline OfflineDataset collect_eps_greedy(const BanditInstance& instance, std::size_t n, double epsilon,
                                         std::uint64_t seed) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    Rng rng(seed);
    std::bernoulli_distribution explore(epsilon);
    std::uniform_int_distribution<std::size_t> uniform(0, instance.num_actions() - 1);
    OfflineDataset data(instance.num_actions(), instance.dim(), {BehaviorKind::EpsGreedy, epsilon, seed});
    for (std::size_t t = 0; t < n; ++t) {
        Round round = instance.sample_round(rng);
        const std::size_t a = explore(rng) ? uniform(rng) : argmax_lowest(round.mean_rewards);
        const double r = instance.sample_reward(round, a, rng);
        data.push_back(Record{std::move(round.contexts), a, r});
    }
    return data;
}

/// History-dependent logging: with probability 1 - epsilon the optimal action,
/// otherwise the action of a LinUCB learner fed every logged record.
inline OfflineDataset collect_adaptive(const BanditInstance& instance, std::size_t n, double epsilon,
                                       std::uint64_t seed, double alpha = 1.0, double lambda = 0.1) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
    Rng rng(seed);
    std::bernoulli_distribution use_learner(epsilon);
    LinUcb learner(instance.dim(), lambda, alpha);
    OfflineDataset data(instance.num_actions(), instance.dim(), {BehaviorKind::Adaptive, epsilon, seed});
    for (std::size_t t = 0; t < n; ++t) {
        Round round = instance.sample_round(rng);
        const std::size_t a = use_learner(rng) ? learner.act(round.contexts) : argmax_lowest(round.mean_rewards);
        const double r = instance.sample_reward(round, a, rng);
        learner.update(round.contexts.row(static_cast<Eigen::Index>(a)).transpose(), r);
        data.push_back(Record{std::move(round.contexts), a, r});
    }
    return data;
}

/// Single-policy concentration coefficient of a known behavior policy.
struct Kappa {
    double value = 0.0;
    bool upper_bound = false;  // true when only a bound is known
};

inline std::optional<Kappa> compute_kappa(const BehaviorInfo& behavior, std::size_t num_actions) {
    const double eps = behavior.epsilon;
    switch (behavior.kind) {
        case BehaviorKind::EpsGreedy:
            return Kappa{1.0 / (1.0 - eps + eps / static_cast<double>(num_actions)), false};
        case BehaviorKind::Adaptive:
            if (eps >= 1.0) return std::nullopt;
            return Kappa{1.0 / (1.0 - eps), true};
        case BehaviorKind::External:
            return std::nullopt;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

enum class ColumnKind { Numeric, Categorical, Label, Skip };

struct ColumnSpec {
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;  // declared levels; empty = infer from data
};

/// Column layout of a CSV file. As JSON:
///   {"header": true, "missing": "?", "drop_missing": false,
///    "columns": ["num", "cat", "cat:a|b", "label", "label:e|p", "skip"]}
struct TableSchema {
    std::vector<ColumnSpec> columns;
    bool header = false;
    std::string missing = "?";
    bool drop_missing = false;

    static TableSchema from_json(const nlohmann::json& j) {
        TableSchema s;
        s.header = j.value("header", false);
        s.missing = j.value("missing", std::string("?"));
        s.drop_missing = j.value("drop_missing", false);
        for (const auto& c : j.at("columns")) s.columns.push_back(parse_column(c.get<std::string>()));
        s.validate();
        return s;
    }

    static TableSchema load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open schema '" + path + "'");
        return from_json(nlohmann::json::parse(is));
    }

    static ColumnSpec parse_column(const std::string& token) {
        const auto colon = token.find(':');
        const std::string head = token.substr(0, colon);
        ColumnSpec c;
        if (head == "num") c.kind = ColumnKind::Numeric;
        else if (head == "cat") c.kind = ColumnKind::Categorical;
        else if (head == "label") c.kind = ColumnKind::Label;
        else if (head == "skip") c.kind = ColumnKind::Skip;
        else throw ConfigError("unknown column kind '" + head + "'");
        if (colon != std::string::npos) {
            std::stringstream ss(token.substr(colon + 1));
            std::string level;
            while (std::getline(ss, level, '|')) c.categories.push_back(level);
        }
        return c;
    }

    void validate() const {
        const auto labels = std::count_if(columns.begin(), columns.end(),
                                          [](const ColumnSpec& c) { return c.kind == ColumnKind::Label; });
        if (labels != 1) throw ConfigError("schema needs exactly one label column");
    }
};

struct RawTable {
    Matrix features;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;  // index = encoded label
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }
    [[nodiscard]] std::size_t rows() const { return labels.size(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\"'");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\"'");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Parses a CSV under `schema`: numeric columns as reals, categorical columns
/// one-hot encoded, the label column mapped to [0, K). Undeclared levels are
/// collected from the data in sorted order; values outside declared levels and
/// malformed rows are rejected with their line number.
inline RawTable load_table(std::istream& is, const TableSchema& schema) {
    schema.validate();
    const std::size_t ncols = schema.columns.size();
    std::vector<std::vector<std::string>> cells;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1 && schema.header) continue;
        if (detail::trim(line).empty()) continue;
        auto row = detail::split_csv(line);
        if (row.size() != ncols) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncols) +
                              " fields, got " + std::to_string(row.size()));
        }
        const bool has_missing = std::any_of(row.begin(), row.end(),
                                             [&](const std::string& c) { return c.empty() || c == schema.missing; });
        if (has_missing) {
            if (schema.drop_missing) continue;
            throw ConfigError("line " + std::to_string(line_no) + ": missing value");
        }
        cells.push_back(std::move(row));
        line_numbers.push_back(line_no);
    }

    // level tables for categorical and label columns
    std::vector<std::map<std::string, std::size_t>> levels(ncols);
    std::vector<std::vector<std::string>> level_names(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
        const ColumnSpec& spec = schema.columns[c];
        if (spec.kind != ColumnKind::Categorical && spec.kind != ColumnKind::Label) continue;
        std::vector<std::string> names = spec.categories;
        if (names.empty()) {
            for (const auto& row : cells) names.push_back(row[c]);
            std::sort(names.begin(), names.end());
            names.erase(std::unique(names.begin(), names.end()), names.end());
        }
        for (std::size_t i = 0; i < names.size(); ++i) levels[c][names[i]] = i;
        level_names[c] = std::move(names);
    }

    RawTable table;
    Eigen::Index width = 0;
    for (std::size_t c = 0; c < ncols; ++c) {
        const ColumnSpec& spec = schema.columns[c];
        if (spec.kind == ColumnKind::Numeric) {
            table.feature_names.push_back("col" + std::to_string(c));
            ++width;
        } else if (spec.kind == ColumnKind::Categorical) {
            for (const auto& name : level_names[c]) table.feature_names.push_back("col" + std::to_string(c) + "=" + name);
            width += static_cast<Eigen::Index>(level_names[c].size());
        } else if (spec.kind == ColumnKind::Label) {
            table.class_names = level_names[c];
        }
    }

    table.features = Matrix::Zero(static_cast<Eigen::Index>(cells.size()), width);
    table.labels.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        Eigen::Index j = 0;
        const auto row_index = static_cast<Eigen::Index>(i);
        for (std::size_t c = 0; c < ncols; ++c) {
            const ColumnSpec& spec = schema.columns[c];
            const std::string& v = cells[i][c];
            auto level_of = [&]() {
                const auto it = levels[c].find(v);
                if (it == levels[c].end()) {
                    throw ConfigError("line " + std::to_string(line_numbers[i]) + ": unknown category '" + v +
                                      "' in column " + std::to_string(c));
                }
                return it->second;
            };
            switch (spec.kind) {
                case ColumnKind::Numeric: {
                    std::size_t used = 0;
                    double x = 0.0;
                    try {
                        x = std::stod(v, &used);
                    } catch (const std::exception&) {
                        used = 0;
                    }
                    if (used != v.size()) {
                        throw ConfigError("line " + std::to_string(line_numbers[i]) + ": non-numeric value '" + v +
                                          "' in column " + std::to_string(c));
                    }
                    table.features(row_index, j++) = x;
                    break;
                }
                case ColumnKind::Categorical:
                    table.features(row_index, j + static_cast<Eigen::Index>(level_of())) = 1.0;
                    j += static_cast<Eigen::Index>(level_names[c].size());
                    break;
                case ColumnKind::Label: table.labels[i] = level_of(); break;
                case ColumnKind::Skip: break;
            }
        }
    }
    return table;
}

inline RawTable load_table(const std::string& path, const TableSchema& schema) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open data file '" + path + "'");
    return load_table(is, schema);
}

/// Classification bandit over a loaded table (features min-max scaled then
/// row-normalized).
inline BanditInstance classification_bandit(const RawTable& table, std::string name = "classification") {
    return BanditInstance::classification(preprocess_features(table.features), table.labels, table.num_classes(),
                                          std::move(name));
}

/// Mushroom bandit over a loaded table whose label column holds edibility.
inline BanditInstance mushroom_bandit(const RawTable& table, const std::string& edible_label = "e") {
    std::vector<bool> edible(table.rows());
    for (std::size_t i = 0; i < table.rows(); ++i) edible[i] = table.class_names[table.labels[i]] == edible_label;
    return BanditInstance::mushroom(preprocess_features(table.features), std::move(edible));
}

}  // namespace banditlab
