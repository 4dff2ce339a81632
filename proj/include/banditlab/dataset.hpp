#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "banditlab/nn.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

struct Record {
    FullContext contexts;  // K x d
    std::size_t action = 0;
    double reward = 0.0;

    [[nodiscard]] Vector chosen() const { return contexts.row(static_cast<Eigen::Index>(action)).transpose(); }
};

enum class BehaviorKind { EpsGreedy, Adaptive, External };

inline const char* to_string(BehaviorKind k) {
    switch (k) {
        case BehaviorKind::EpsGreedy: return "eps_greedy";
        case BehaviorKind::Adaptive: return "adaptive";
        case BehaviorKind::External: return "external";
    }
    return "?";
}

inline BehaviorKind behavior_from_string(const std::string& s) {
    if (s == "eps_greedy") return BehaviorKind::EpsGreedy;
    if (s == "adaptive") return BehaviorKind::Adaptive;
    if (s == "external") return BehaviorKind::External;
    throw ConfigError("unknown behavior kind '" + s + "'");
}

struct BehaviorInfo {
    BehaviorKind kind = BehaviorKind::External;
    double epsilon = 0.0;
    std::uint64_t seed = 0;
};

/// Offline log in collection order. All records share (K, d).
class OfflineDataset {
public:
    OfflineDataset() = default;
    OfflineDataset(std::size_t num_actions, Eigen::Index dim, BehaviorInfo behavior = {})
        : num_actions_(num_actions), dim_(dim), behavior_(behavior) {}

    void push_back(Record r) {
        if (records_.empty() && num_actions_ == 0) {
            num_actions_ = static_cast<std::size_t>(r.contexts.rows());
            dim_ = r.contexts.cols();
        }
        expect_dim(static_cast<std::size_t>(r.contexts.rows()), num_actions_, "record action count");
        expect_dim(static_cast<std::size_t>(r.contexts.cols()), static_cast<std::size_t>(dim_), "record context dim");
        if (r.action >= num_actions_) throw DimensionError("record action out of range");
        records_.push_back(std::move(r));
    }

    [[nodiscard]] std::size_t size() const { return records_.size(); }
    [[nodiscard]] bool empty() const { return records_.empty(); }
    [[nodiscard]] const Record& operator[](std::size_t i) const { return records_[i]; }
    [[nodiscard]] auto begin() const { return records_.begin(); }
    [[nodiscard]] auto end() const { return records_.end(); }
    [[nodiscard]] std::size_t num_actions() const { return num_actions_; }
    [[nodiscard]] Eigen::Index dim() const { return dim_; }
    [[nodiscard]] const BehaviorInfo& behavior() const { return behavior_; }

    /// First n records, same metadata.
    [[nodiscard]] OfflineDataset prefix(std::size_t n) const {
        OfflineDataset out(num_actions_, dim_, behavior_);
        out.records_.assign(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(std::min(n, size())));
        return out;
    }

    /// Chosen-action features as rows (n x d) and the rewards.
    [[nodiscard]] Matrix chosen_features() const {
        Matrix x(static_cast<Eigen::Index>(size()), dim_);
        for (std::size_t t = 0; t < size(); ++t) {
            x.row(static_cast<Eigen::Index>(t)) = records_[t].contexts.row(static_cast<Eigen::Index>(records_[t].action));
        }
        return x;
    }
    [[nodiscard]] Vector rewards() const {
        Vector r(static_cast<Eigen::Index>(size()));
        for (std::size_t t = 0; t < size(); ++t) r[static_cast<Eigen::Index>(t)] = records_[t].reward;
        return r;
    }

private:
    std::size_t num_actions_ = 0;
    Eigen::Index dim_ = 0;
    BehaviorInfo behavior_;
    std::vector<Record> records_;
};

// File layout: one JSON header line {"d","K","n","behavior","epsilon","seed"},
// then per record K*d little-endian f64 context values (row a = action a),
// u32 action, f64 reward and a '\n' byte.
inline void write_dataset(std::ostream& os, const OfflineDataset& data) {
    nlohmann::ordered_json header;
    header["d"] = data.dim();
    header["K"] = data.num_actions();
    header["n"] = data.size();
    header["behavior"] = to_string(data.behavior().kind);
    header["epsilon"] = data.behavior().epsilon;
    header["seed"] = data.behavior().seed;
    os << header.dump() << '\n';
    for (const Record& r : data) {
        const RowMatrix rows = r.contexts;
        os.write(reinterpret_cast<const char*>(rows.data()), static_cast<std::streamsize>(rows.size() * sizeof(double)));
        io::write_raw(os, static_cast<std::uint32_t>(r.action));
        io::write_raw(os, r.reward);
        os.put('\n');
    }
}

inline OfflineDataset read_dataset(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("dataset: missing header line");
    const auto header = nlohmann::json::parse(line);
    const auto d = header.at("d").get<Eigen::Index>();
    const auto k = header.at("K").get<std::size_t>();
    const auto n = header.at("n").get<std::size_t>();
    BehaviorInfo info{behavior_from_string(header.at("behavior").get<std::string>()),
                      header.at("epsilon").get<double>(), header.at("seed").get<std::uint64_t>()};
    OfflineDataset data(k, d, info);
    for (std::size_t t = 0; t < n; ++t) {
        RowMatrix rows(static_cast<Eigen::Index>(k), d);
        is.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * sizeof(double)));
        Record r;
        r.contexts = rows;
        r.action = io::read_raw<std::uint32_t>(is);
        r.reward = io::read_raw<double>(is);
        if (is.get() != '\n') throw std::runtime_error("dataset: record " + std::to_string(t) + " is not newline-terminated");
        data.push_back(std::move(r));
    }
    return data;
}

inline void save_dataset(const std::string& path, const OfflineDataset& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_dataset(os, data);
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline OfflineDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return read_dataset(is);
}

}  // namespace banditlab
