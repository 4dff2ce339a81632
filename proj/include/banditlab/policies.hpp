#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "banditlab/confidence.hpp"
#include "banditlab/dataset.hpp"
#include "banditlab/nn.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

/// Per-action point estimates and confidence widths for one full context.
struct ArmScores {
    Vector mean;
    Vector bonus;
};

/// Produces mean/bonus pairs; immutable once built.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    [[nodiscard]] virtual ArmScores score(const FullContext& contexts) const = 0;
};

/// Deterministic decision rule: argmax_a mean_a - beta * bonus_a with ties
/// broken toward the smallest action index. Copies share the model.
class Policy {
public:
    Policy() = default;
    Policy(std::shared_ptr<const ScoreModel> model, double beta, std::string name)
        : model_(std::move(model)), beta_(beta), name_(std::move(name)) {}

    [[nodiscard]] ArmScores score(const FullContext& contexts) const { return model_->score(contexts); }

    [[nodiscard]] Vector lcb(const FullContext& contexts) const {
        const ArmScores s = score(contexts);
        return s.mean - beta_ * s.bonus;
    }

    [[nodiscard]] std::size_t act(const FullContext& contexts) const { return argmax_lowest(lcb(contexts)); }

    [[nodiscard]] double beta() const { return beta_; }
    [[nodiscard]] const std::string& name() const { return name_; }
    [[nodiscard]] bool valid() const { return model_ != nullptr; }

    [[nodiscard]] Policy with_beta(double beta) const { return Policy(model_, beta, name_); }

private:
    std::shared_ptr<const ScoreModel> model_;
    double beta_ = 0.0;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Neural network policies (NeuraLCB and NeuralGreedy)
// ---------------------------------------------------------------------------

/// Scores with a network snapshot; the bonus is ||grad f(x) / sqrt(m)||_{Lambda^{-1}}
/// when a covariance is attached and zero otherwise.
class NeuralScoreModel final : public ScoreModel {
public:
    NeuralScoreModel(NetworkParams params, std::optional<CovarianceState> covariance)
        : params_(std::move(params)), covariance_(std::move(covariance)) {}

    [[nodiscard]] ArmScores score(const FullContext& contexts) const override {
        const Eigen::Index k = contexts.rows();
        ArmScores s{Vector(k), Vector::Zero(k)};
        if (!covariance_) {
            s.mean = forward_batch(params_, contexts.transpose());
            return s;
        }
        const double inv_root_m = 1.0 / std::sqrt(static_cast<double>(params_.config().width));
        for (Eigen::Index a = 0; a < k; ++a) {
            auto vg = value_and_gradient(params_, contexts.row(a).transpose());
            s.mean[a] = vg.value;
            vg.gradient *= inv_root_m;
            s.bonus[a] = covariance_->bonus(vg.gradient);
        }
        return s;
    }

    [[nodiscard]] const NetworkParams& params() const { return params_; }
    [[nodiscard]] const std::optional<CovarianceState>& covariance() const { return covariance_; }

private:
    NetworkParams params_;
    std::optional<CovarianceState> covariance_;
};

enum class TrainMode { S, B };
enum class ReturnRule { UniformEnsemble, Latest };

struct NeuralLearnerConfig {
    NetworkConfig network;
    OptimizerConfig optimizer;
    TrainMode mode = TrainMode::S;
    std::size_t batch_size = 50;  // B-mode
    std::size_t epochs = 100;     // B-mode steps per record (J)
    double lambda = 0.1;          // covariance regularization
    std::optional<CovarianceMode> covariance_mode;  // default: by parameter count
    BetaSchedule beta = ConstantBeta{0.05};
    ReturnRule return_rule = ReturnRule::Latest;
    std::uint64_t seed = 0;       // network init and batch sampling

    /// Adam, constant beta, diagonal covariance, latest-policy return.
    static NeuralLearnerConfig practical(NetworkConfig net, double beta, double learning_rate) {
        NeuralLearnerConfig c;
        c.network = net;
        c.network.layer_norm = true;
        c.optimizer.kind = OptimizerKind::Adam;
        c.optimizer.learning_rate = learning_rate;
        c.optimizer.l2 = 1e-4;
        c.covariance_mode = CovarianceMode::Diagonal;
        c.beta = ConstantBeta{beta};
        c.return_rule = ReturnRule::Latest;
        return c;
    }

    /// SGD with eta_t = iota / sqrt(t), uniformly sampled ensemble member.
    static NeuralLearnerConfig theoretical(NetworkConfig net, BetaSchedule beta, double iota, double lambda) {
        NeuralLearnerConfig c;
        c.network = net;
        c.optimizer.kind = OptimizerKind::Sgd;
        c.optimizer.learning_rate = iota;
        c.optimizer.inverse_sqrt_decay = true;
        c.optimizer.l2 = lambda;
        c.lambda = lambda;
        c.beta = beta;
        c.return_rule = ReturnRule::UniformEnsemble;
        return c;
    }
};

/// Online-style trainer shared by NeuraLCB and NeuralGreedy. Each record is
/// consumed once: the covariance absorbs grad f_{W(t-1)}(x_{t,a_t}) / sqrt(m)
/// and the network takes one optimizer step (S-mode) or `epochs` minibatch
/// steps over everything seen so far (B-mode).
class NeuralLearner {
public:
    NeuralLearner(const NeuralLearnerConfig& config, bool pessimistic)
        : config_(config),
          pessimistic_(pessimistic),
          params_(init_symmetric(config.network, config.seed)),
          optimizer_(config.optimizer, config.network.param_count()),
          batch_rng_(mix_seed(config.seed, 0xBA7C)) {
        config_.optimizer.validate();
        if (config_.mode == TrainMode::B && (config_.batch_size == 0 || config_.epochs == 0)) {
            throw ConfigError("B-mode needs positive batch size and epoch count");
        }
        if (pessimistic_) {
            const std::size_t p = config.network.param_count();
            covariance_ = CovarianceState(p, config.lambda, config.covariance_mode.value_or(default_covariance_mode(p)));
        }
    }

    /// Records consumed so far (t).
    [[nodiscard]] std::size_t steps() const { return steps_; }
    [[nodiscard]] const NetworkParams& params() const { return params_; }
    [[nodiscard]] const OptimizerState& optimizer() const { return optimizer_; }
    [[nodiscard]] const std::optional<CovarianceState>& covariance() const { return covariance_; }
    [[nodiscard]] const NeuralLearnerConfig& config() const { return config_; }
    [[nodiscard]] bool pessimistic() const { return pessimistic_; }

    /// The policy pi_{t+1}: decisions from the current (not yet updated) state.
    [[nodiscard]] Policy current_policy() const {
        const double beta = pessimistic_ ? beta_at(config_.beta, steps_) : 0.0;
        auto model = std::make_shared<const NeuralScoreModel>(params_, covariance_);
        return Policy(std::move(model), beta, pessimistic_ ? "neuralcb" : "neuralgreedy");
    }

    void update(const Record& record) {
        expect_dim(static_cast<std::size_t>(record.contexts.cols()), static_cast<std::size_t>(config_.network.input_dim),
                   "record context");
        const Vector x = record.chosen();
        if (covariance_) {
            Vector g = gradient(params_, x);
            g /= std::sqrt(static_cast<double>(config_.network.width));
            covariance_->rank1_update(g);
        }
        ++steps_;
        if (config_.mode == TrainMode::S) {
            optimizer_.schedule_t = steps_;
            optimizer_step(params_, optimizer_, loss_gradient(params_, x, record.reward, config_.optimizer.l2));
            return;
        }
        append_history(x, record.reward);
        std::uniform_int_distribution<std::size_t> pick(0, steps_ - 1);
        const auto b = static_cast<Eigen::Index>(config_.batch_size);
        Matrix batch(x.size(), b);
        Vector targets(b);
        for (std::size_t j = 0; j < config_.epochs; ++j) {
            for (Eigen::Index q = 0; q < b; ++q) {
                const auto idx = static_cast<Eigen::Index>(pick(batch_rng_));
                batch.col(q) = history_x_.col(idx);
                targets[q] = history_r_[idx];
            }
            optimizer_.schedule_t = steps_;
            optimizer_step(params_, optimizer_, batch_loss_gradient(params_, batch, targets, config_.optimizer.l2));
        }
    }

    /// Emits pi_t (pre-update) and then consumes the record.
    Policy step(const Record& record) {
        Policy p = current_policy();
        update(record);
        return p;
    }

    void write_checkpoint(std::ostream& os) const {
        banditlab::write_checkpoint(os, params_);
        io::write_raw(os, static_cast<std::uint64_t>(steps_));
        io::write_raw(os, optimizer_.steps);
        io::write_doubles(os, optimizer_.first_moment);
        io::write_doubles(os, optimizer_.second_moment);
        io::write_raw(os, static_cast<std::uint8_t>(covariance_ ? 1 : 0));
        if (covariance_) covariance_->write(os);
    }

    /// Restores a state written by write_checkpoint under the same config.
    /// B-mode history is not part of the checkpoint.
    void read_checkpoint(std::istream& is) {
        NetworkParams loaded = banditlab::read_checkpoint(is);
        if (!(loaded.config() == config_.network)) throw ConfigError("checkpoint network shape differs from config");
        params_ = std::move(loaded);
        steps_ = io::read_raw<std::uint64_t>(is);
        optimizer_.steps = io::read_raw<std::uint64_t>(is);
        const auto p = static_cast<Eigen::Index>(params_.size());
        optimizer_.first_moment = io::read_doubles(is, p);
        optimizer_.second_moment = io::read_doubles(is, p);
        if (io::read_raw<std::uint8_t>(is) != 0) covariance_ = CovarianceState::read(is);
    }

private:
    void append_history(const Vector& x, double r) {
        if (static_cast<std::size_t>(history_x_.cols()) < steps_) {
            const Eigen::Index cap = std::max<Eigen::Index>(64, 2 * history_x_.cols());
            history_x_.conservativeResize(x.size(), cap);
            history_r_.conservativeResize(cap);
        }
        history_x_.col(static_cast<Eigen::Index>(steps_ - 1)) = x;
        history_r_[static_cast<Eigen::Index>(steps_ - 1)] = r;
    }

    NeuralLearnerConfig config_;
    bool pessimistic_;
    NetworkParams params_;
    OptimizerState optimizer_;
    std::optional<CovarianceState> covariance_;
    std::size_t steps_ = 0;
    Rng batch_rng_;
    Matrix history_x_;
    Vector history_r_;
};

/// One NeuraLCB step: returns pi_t built from W(t-1), Lambda(t-1), then updates.
inline Policy neuralcb_step(NeuralLearner& learner, const Record& record) { return learner.step(record); }

namespace detail {

inline Policy run_neural(const OfflineDataset& data, const NeuralLearnerConfig& config, bool pessimistic) {
    if (data.empty()) throw ConfigError("cannot fit a policy on an empty dataset");
    NeuralLearner learner(config, pessimistic);
    const std::size_t n = data.size();
    // pi_t for t in [1, n]; UniformEnsemble fixes the member before training.
    std::size_t chosen = n;
    if (config.return_rule == ReturnRule::UniformEnsemble) {
        Rng rng(mix_seed(config.seed, 0xE75E));
        chosen = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    }
    for (std::size_t t = 1; t < chosen; ++t) learner.update(data[t - 1]);
    return learner.current_policy();
}

}  // namespace detail

/// NeuraLCB over a whole log. The ensemble member index is drawn from the
/// configured seed; with the Latest rule the result is pi_n.
inline Policy neuralcb_run(const OfflineDataset& data, const NeuralLearnerConfig& config) {
    return detail::run_neural(data, config, true);
}

inline Policy neural_greedy_run(const OfflineDataset& data, const NeuralLearnerConfig& config) {
    return detail::run_neural(data, config, false);
}

// ---------------------------------------------------------------------------
// Linear policies (LinLCB, NeuralLinLCB, NeuralLinGreedy)
// ---------------------------------------------------------------------------

/// Feature map phi(u): identity, or the gradient of a frozen network.
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(NetworkParams frozen) : network_(std::make_shared<const NetworkParams>(std::move(frozen))) {}

    [[nodiscard]] Vector operator()(const Eigen::Ref<const Vector>& u) const {
        return network_ ? gradient(*network_, u) : Vector(u);
    }
    [[nodiscard]] Eigen::Index dim(Eigen::Index raw_dim) const {
        return network_ ? static_cast<Eigen::Index>(network_->size()) : raw_dim;
    }
    [[nodiscard]] bool is_raw() const { return network_ == nullptr; }

private:
    std::shared_ptr<const NetworkParams> network_;
};

/// Ridge fit theta = Lambda^{-1} sum phi r with Lambda = lambda I + sum phi phi^T.
struct LinearLcbModel final : public ScoreModel {
    Vector theta;
    CovarianceState covariance;
    FeatureMap features;

    [[nodiscard]] ArmScores score(const FullContext& contexts) const override {
        const Eigen::Index k = contexts.rows();
        ArmScores s{Vector(k), Vector(k)};
        for (Eigen::Index a = 0; a < k; ++a) {
            const Vector phi = features(contexts.row(a).transpose());
            s.mean[a] = theta.dot(phi);
            s.bonus[a] = covariance.bonus(phi);
        }
        return s;
    }
};

inline std::shared_ptr<const LinearLcbModel> fit_linear_model(const OfflineDataset& data, double lambda,
                                                              FeatureMap features,
                                                              std::optional<CovarianceMode> mode = {}) {
    if (!(lambda > 0.0)) throw ConfigError("ridge lambda must be positive");
    if (data.empty()) throw ConfigError("cannot fit a policy on an empty dataset");
    const Eigen::Index p = features.dim(data.dim());
    const auto cov_mode = mode.value_or(default_covariance_mode(static_cast<std::size_t>(p)));
    Matrix phi(static_cast<Eigen::Index>(data.size()), p);
    for (std::size_t t = 0; t < data.size(); ++t) {
        phi.row(static_cast<Eigen::Index>(t)) = features(data[t].chosen()).transpose();
    }
    const Vector r = data.rewards();
    const Vector b = phi.transpose() * r;
    auto model = std::make_shared<LinearLcbModel>();
    if (cov_mode == CovarianceMode::Full) {
        Matrix gram = lambda * Matrix::Identity(p, p);
        gram.noalias() += phi.transpose() * phi;
        model->covariance = CovarianceState::from_matrix(std::move(gram), lambda, data.size());
    } else {
        Vector diag = (phi.array().square().colwise().sum()).transpose();
        diag.array() += lambda;
        model->covariance = CovarianceState::from_diagonal(std::move(diag), lambda, data.size());
    }
    model->theta = model->covariance.solve(b);
    model->features = std::move(features);
    return model;
}

inline Policy linlcb_fit(const OfflineDataset& data, double lambda, double beta) {
    return Policy(fit_linear_model(data, lambda, FeatureMap{}, CovarianceMode::Full), beta, "linlcb");
}

/// Linear LCB (or greedy) on frozen features phi(u) = grad f_{W0}(u).
inline Policy neurallin_fit(const OfflineDataset& data, double lambda, double beta, const NetworkParams& init,
                            bool greedy, std::optional<CovarianceMode> mode = {}) {
    auto model = fit_linear_model(data, lambda, FeatureMap(init), mode);
    return Policy(std::move(model), greedy ? 0.0 : beta, greedy ? "neurallingreedy" : "neurallinlcb");
}

// ---------------------------------------------------------------------------
// Kernel LCB
// ---------------------------------------------------------------------------

using Kernel = std::function<double(const Eigen::Ref<const Vector>&, const Eigen::Ref<const Vector>&)>;

/// k(u, v) = exp(-||u - v||^2 / (2 sigma^2))
inline Kernel rbf_kernel(double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("RBF bandwidth must be positive");
    const double scale = -1.0 / (2.0 * sigma * sigma);
    return [scale](const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) {
        return std::exp(scale * (u - v).squaredNorm());
    };
}

inline Kernel linear_kernel() {
    return [](const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Vector>& v) { return u.dot(v); };
}

struct KernelLcbModel final : public ScoreModel {
    Matrix support;       // N x d, rows are x_{t,a_t}
    Eigen::LLT<Matrix> factor;  // of K_n + lambda I
    Vector dual_weights;  // (K_n + lambda I)^{-1} y
    Kernel kernel;

    [[nodiscard]] ArmScores score(const FullContext& contexts) const override {
        const Eigen::Index k = contexts.rows();
        const Eigen::Index n = support.rows();
        Matrix kq(n, k);
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index i = 0; i < n; ++i) kq(i, a) = kernel(support.row(i).transpose(), contexts.row(a).transpose());
        }
        const Matrix half = factor.matrixL().solve(kq);
        ArmScores s{kq.transpose() * dual_weights, Vector(k)};
        for (Eigen::Index a = 0; a < k; ++a) {
            const Vector u = contexts.row(a).transpose();
            const double var = kernel(u, u) - half.col(a).squaredNorm();
            s.bonus[a] = std::sqrt(std::max(var, 0.0));
        }
        return s;
    }
};

/// KernLCB on the first min(n, cap) records.
inline std::shared_ptr<const KernelLcbModel> fit_kernel_model(const OfflineDataset& data, double lambda, Kernel kernel,
                                                              std::size_t cap) {
    if (cap < 1) throw ConfigError("KernLCB sample cap must be >= 1");
    if (!(lambda > 0.0)) throw ConfigError("kernel ridge lambda must be positive");
    if (data.empty()) throw ConfigError("cannot fit a policy on an empty dataset");
    const OfflineDataset used = data.prefix(cap);
    auto model = std::make_shared<KernelLcbModel>();
    model->support = used.chosen_features();
    const Eigen::Index n = model->support.rows();
    Matrix gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            gram(i, j) = gram(j, i) = kernel(model->support.row(i).transpose(), model->support.row(j).transpose());
        }
    }
    gram.diagonal().array() += lambda;
    model->factor.compute(gram);
    if (model->factor.info() != Eigen::Success) throw NumericalError("kernel matrix plus lambda I is not positive definite");
    model->dual_weights = model->factor.solve(used.rewards());
    model->kernel = std::move(kernel);
    return model;
}

inline Policy kernlcb_fit(const OfflineDataset& data, double lambda, double beta, Kernel kernel, std::size_t cap = 1000) {
    return Policy(fit_kernel_model(data, lambda, std::move(kernel), cap), beta, "kernlcb");
}

inline Policy kernlcb_fit(const OfflineDataset& data, double lambda, double beta, double sigma, std::size_t cap = 1000) {
    return kernlcb_fit(data, lambda, beta, rbf_kernel(sigma), cap);
}

// ---------------------------------------------------------------------------
// LinUCB (behavior-policy helper)
// ---------------------------------------------------------------------------

/// Online ridge UCB: argmax_a theta.x_a + alpha ||x_a||_{Lambda^{-1}}.
class LinUcb {
public:
    LinUcb(Eigen::Index dim, double lambda = 0.1, double alpha = 1.0)
        : covariance_(static_cast<std::size_t>(dim), lambda, CovarianceMode::Full),
          b_(Vector::Zero(dim)),
          theta_(Vector::Zero(dim)),
          alpha_(alpha) {}

    [[nodiscard]] Vector ucb(const FullContext& contexts) const {
        Vector s(contexts.rows());
        for (Eigen::Index a = 0; a < contexts.rows(); ++a) {
            const Vector x = contexts.row(a).transpose();
            s[a] = theta_.dot(x) + alpha_ * covariance_.bonus(x);
        }
        return s;
    }

    [[nodiscard]] std::size_t act(const FullContext& contexts) const { return argmax_lowest(ucb(contexts)); }

    void update(const Eigen::Ref<const Vector>& x, double reward) {
        covariance_.rank1_update(x);
        b_.noalias() += reward * x;
        theta_ = covariance_.solve(b_);
    }

    [[nodiscard]] const Vector& theta() const { return theta_; }
    [[nodiscard]] const CovarianceState& covariance() const { return covariance_; }

private:
    CovarianceState covariance_;
    Vector b_;
    Vector theta_;
    double alpha_;
};

inline std::size_t linucb_act(const LinUcb& state, const FullContext& contexts) { return state.act(contexts); }

}  // namespace banditlab
