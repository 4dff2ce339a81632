#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "banditlab/types.hpp"

namespace banditlab {

/// Scales x onto the unit sphere.
inline Vector unit_sphere_transform(const Eigen::Ref<const Vector>& x) {
    const double n = x.norm();
    if (!(n > 0.0)) throw DimensionError("cannot normalize a zero vector");
    return x / n;
}

/// x' = [x, x] / sqrt(2): same norm, even dimension, both halves equal.
inline Vector duplicate_transform(const Eigen::Ref<const Vector>& x) {
    Vector out(2 * x.size());
    out << x, x;
    return out / std::sqrt(2.0);
}

inline Vector sample_unit_sphere(Eigen::Index d, Rng& rng) {
    Vector v(d);
    do {
        for (Eigen::Index i = 0; i < d; ++i) v[i] = standard_normal(rng);
    } while (v.norm() == 0.0);
    return v / v.norm();
}

enum class SyntheticFamily { H1, H2, H3 };

inline const char* to_string(SyntheticFamily f) {
    switch (f) {
        case SyntheticFamily::H1: return "h1";
        case SyntheticFamily::H2: return "h2";
        case SyntheticFamily::H3: return "h3";
    }
    return "?";
}

/// Parameters of the synthetic mean-reward families
///   h1(u) = 10 (u.a)^2,  h2(u) = u^T A^T A u,  h3(u) = cos(3 u.a).
struct SyntheticSpec {
    SyntheticFamily family = SyntheticFamily::H1;
    Vector a;  // unit vector (h1, h3)
    Matrix A;  // d x d standard Gaussian (h2)

    static SyntheticSpec make(SyntheticFamily family, Eigen::Index d, std::uint64_t seed) {
        Rng rng(seed);
        SyntheticSpec s;
        s.family = family;
        s.a = sample_unit_sphere(d, rng);
        s.A.resize(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) s.A(i, j) = standard_normal(rng);
        }
        return s;
    }

    [[nodiscard]] Eigen::Index dim() const { return a.size(); }
};

inline double synthetic_reward(const SyntheticSpec& spec, const Eigen::Ref<const Vector>& u) {
    expect_dim(static_cast<std::size_t>(u.size()), static_cast<std::size_t>(spec.dim()), "synthetic reward input");
    switch (spec.family) {
        case SyntheticFamily::H1: {
            const double p = u.dot(spec.a);
            return 10.0 * p * p;
        }
        case SyntheticFamily::H2: return u.dot(spec.A.transpose() * (spec.A * u));
        case SyntheticFamily::H3: return std::cos(3.0 * u.dot(spec.a));
    }
    return 0.0;
}

/// One round drawn from a bandit: the full context together with the true
/// mean reward of every action. `row` identifies the source record for
/// dataset-backed bandits.
struct Round {
    FullContext contexts;
    Vector mean_rewards;
    std::size_t row = 0;
};

/// Places x in block a of a (d K)-vector.
inline Vector block_context(const Eigen::Ref<const Vector>& x, std::size_t a, std::size_t num_actions) {
    Vector out = Vector::Zero(x.size() * static_cast<Eigen::Index>(num_actions));
    out.segment(x.size() * static_cast<Eigen::Index>(a), x.size()) = x;
    return out;
}

class BanditInstance {
public:
    struct Synthetic {
        SyntheticSpec spec;
        std::size_t num_actions;
        double noise_std;
    };
    struct Classification {
        Matrix features;
        std::vector<std::size_t> labels;
        std::size_t num_classes;
    };
    struct Mushroom {
        Matrix features;
        std::vector<bool> edible;
    };

    static constexpr std::size_t kEat = 0;
    static constexpr std::size_t kNoEat = 1;

    static BanditInstance synthetic(SyntheticSpec spec, std::size_t num_actions, double noise_std = 0.1) {
        if (num_actions < 1) throw ConfigError("bandit needs at least one action");
        if (noise_std < 0.0) throw ConfigError("noise std must be nonnegative");
        BanditInstance b;
        b.name_ = to_string(spec.family);
        b.dim_ = spec.dim();
        b.num_actions_ = num_actions;
        b.impl_ = Synthetic{std::move(spec), num_actions, noise_std};
        return b;
    }

    /// K-class data as a K-armed bandit: action a sees (0, .., x, .., 0) with
    /// x in block a and earns 1 iff a is the label.
    static BanditInstance classification(Matrix features, std::vector<std::size_t> labels, std::size_t num_classes,
                                         std::string name = "classification") {
        if (features.rows() == 0) throw ConfigError("classification bandit needs data");
        expect_dim(labels.size(), static_cast<std::size_t>(features.rows()), "classification labels");
        if (num_classes < 1) throw ConfigError("classification bandit needs at least one class");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= num_classes) {
                throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                  " is outside [0, " + std::to_string(num_classes) + ")");
            }
        }
        BanditInstance b;
        b.name_ = std::move(name);
        b.dim_ = features.cols() * static_cast<Eigen::Index>(num_classes);
        b.num_actions_ = num_classes;
        b.impl_ = Classification{std::move(features), std::move(labels), num_classes};
        return b;
    }

    /// Eat (action 0) / no-eat (action 1). Eating edible pays 5, eating
    /// poisonous pays 5 or -35 with equal probability, not eating pays 0.
    static BanditInstance mushroom(Matrix features, std::vector<bool> edible) {
        if (features.rows() == 0) throw ConfigError("mushroom bandit needs data");
        expect_dim(edible.size(), static_cast<std::size_t>(features.rows()), "mushroom edibility flags");
        BanditInstance b;
        b.name_ = "mushroom";
        b.dim_ = features.cols() * 2;
        b.num_actions_ = 2;
        b.impl_ = Mushroom{std::move(features), std::move(edible)};
        return b;
    }

    /// Emits every context as [x, x] / sqrt(2) (dimension doubles).
    BanditInstance& with_duplication(bool on = true) {
        duplicate_ = on;
        return *this;
    }

    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] std::size_t num_actions() const { return num_actions_; }
    /// Dimension of emitted contexts (after duplication, if enabled).
    [[nodiscard]] Eigen::Index dim() const { return duplicate_ ? 2 * dim_ : dim_; }
    [[nodiscard]] bool duplicated() const { return duplicate_; }
    [[nodiscard]] bool noiseless() const {
        if (const auto* s = std::get_if<Synthetic>(&impl_)) return s->noise_std == 0.0;
        return std::holds_alternative<Classification>(impl_);
    }
    [[nodiscard]] const auto& impl() const { return impl_; }

    [[nodiscard]] Round sample_round(Rng& rng) const {
        Round r;
        const auto k = static_cast<Eigen::Index>(num_actions_);
        Matrix raw(k, dim_);
        r.mean_rewards.resize(k);
        if (const auto* s = std::get_if<Synthetic>(&impl_)) {
            for (Eigen::Index a = 0; a < k; ++a) {
                raw.row(a) = sample_unit_sphere(dim_, rng).transpose();
                r.mean_rewards[a] = synthetic_reward(s->spec, raw.row(a).transpose());
            }
        } else if (const auto* c = std::get_if<Classification>(&impl_)) {
            r.row = pick_row(static_cast<std::size_t>(c->features.rows()), rng);
            const Vector x = c->features.row(static_cast<Eigen::Index>(r.row)).transpose();
            for (Eigen::Index a = 0; a < k; ++a) {
                raw.row(a) = block_context(x, static_cast<std::size_t>(a), num_actions_).transpose();
                r.mean_rewards[a] = static_cast<std::size_t>(a) == c->labels[r.row] ? 1.0 : 0.0;
            }
        } else {
            const auto& mu = std::get<Mushroom>(impl_);
            r.row = pick_row(static_cast<std::size_t>(mu.features.rows()), rng);
            const Vector x = mu.features.row(static_cast<Eigen::Index>(r.row)).transpose();
            raw.row(kEat) = block_context(x, kEat, 2).transpose();
            raw.row(kNoEat) = block_context(x, kNoEat, 2).transpose();
            r.mean_rewards[kEat] = mu.edible[r.row] ? 5.0 : -15.0;
            r.mean_rewards[kNoEat] = 0.0;
        }
        if (duplicate_) {
            r.contexts.resize(k, 2 * dim_);
            for (Eigen::Index a = 0; a < k; ++a) {
                r.contexts.row(a) = duplicate_transform(raw.row(a).transpose()).transpose();
            }
        } else {
            r.contexts = std::move(raw);
        }
        return r;
    }

    [[nodiscard]] FullContext sample_full_context(std::uint64_t seed) const {
        Rng rng(seed);
        return sample_round(rng).contexts;
    }

    /// Draws a realized reward for playing `action` in `round`.
    [[nodiscard]] double sample_reward(const Round& round, std::size_t action, Rng& rng) const {
        const double mean = round.mean_rewards[static_cast<Eigen::Index>(action)];
        if (const auto* s = std::get_if<Synthetic>(&impl_)) {
            return s->noise_std > 0.0 ? mean + s->noise_std * standard_normal(rng) : mean;
        }
        if (const auto* mu = std::get_if<Mushroom>(&impl_)) {
            if (action == kEat && !mu->edible[round.row]) {
                return std::bernoulli_distribution(0.5)(rng) ? 5.0 : -35.0;
            }
        }
        return mean;
    }

private:
    static std::size_t pick_row(std::size_t n, Rng& rng) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }

    std::string name_;
    Eigen::Index dim_ = 0;
    std::size_t num_actions_ = 0;
    bool duplicate_ = false;
    std::variant<Synthetic, Classification, Mushroom> impl_;
};

inline double optimal_value(const Round& round) { return round.mean_rewards.maxCoeff(); }

/// v*(x) for a synthetic instance, recomputed from the contexts themselves.
inline double optimal_value(const BanditInstance& instance, const FullContext& contexts) {
    const auto* s = std::get_if<BanditInstance::Synthetic>(&instance.impl());
    if (s == nullptr) throw ConfigError("optimal value from raw contexts needs a synthetic bandit; use the Round");
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < contexts.rows(); ++a) {
        Vector u = contexts.row(a).transpose();
        if (instance.duplicated()) u = Vector(std::sqrt(2.0) * u.head(u.size() / 2));
        best = std::max(best, synthetic_reward(s->spec, u));
    }
    return best;
}

/// Per-feature min-max scaling to [0, 1] followed by row L2 normalization.
/// Constant columns map to 0; rows that end up all-zero are left as zero.
inline Matrix preprocess_features(const Matrix& features) {
    Matrix out = features;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double lo = out.col(j).minCoeff();
        const double hi = out.col(j).maxCoeff();
        if (hi > lo) {
            out.col(j) = (out.col(j).array() - lo) / (hi - lo);
        } else {
            out.col(j).setZero();
        }
    }
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n > 0.0) out.row(i) /= n;
    }
    return out;
}

struct LabeledData {
    Matrix features;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
};

/// Isotropic Gaussian clusters around random centers of norm `separation`.
inline LabeledData gaussian_blobs(std::size_t rows, Eigen::Index d, std::size_t num_classes, double separation,
                                  std::uint64_t seed) {
    if (num_classes < 1 || rows < 1) throw ConfigError("gaussian blobs need rows and classes");
    Rng rng(seed);
    Matrix centers(static_cast<Eigen::Index>(num_classes), d);
    for (std::size_t c = 0; c < num_classes; ++c) {
        centers.row(static_cast<Eigen::Index>(c)) = separation * sample_unit_sphere(d, rng).transpose();
    }
    LabeledData out;
    out.num_classes = num_classes;
    out.features.resize(static_cast<Eigen::Index>(rows), d);
    out.labels.resize(rows);
    std::uniform_int_distribution<std::size_t> pick(0, num_classes - 1);
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t c = pick(rng);
        out.labels[i] = c;
        for (Eigen::Index j = 0; j < d; ++j) {
            out.features(static_cast<Eigen::Index>(i), j) = centers(static_cast<Eigen::Index>(c), j) + standard_normal(rng);
        }
    }
    return out;
}

}  // namespace banditlab
