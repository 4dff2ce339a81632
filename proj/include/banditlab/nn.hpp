#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "banditlab/types.hpp"

namespace banditlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and dataset formats assume a little-endian host");

/// Shape of the fully connected ReLU network
///   f(u) = sqrt(m) * W_L relu(W_{L-1} relu(... relu(W_1 u))).
struct NetworkConfig {
    int depth = 2;       // L >= 2
    int width = 20;      // m, even
    int input_dim = 2;   // d, even
    bool layer_norm = false;

    static constexpr double kLayerNormEps = 1e-5;

    void validate() const {
        if (depth < 2) throw ConfigError("network depth must be >= 2");
        if (width < 2 || width % 2 != 0) throw ConfigError("network width must be an even integer >= 2");
        if (input_dim < 2 || input_dim % 2 != 0) {
            throw ConfigError("network input dimension must be an even integer >= 2");
        }
    }

    /// p = m d + m + m^2 (L - 2)
    [[nodiscard]] std::size_t param_count() const {
        const auto m = static_cast<std::size_t>(width);
        const auto d = static_cast<std::size_t>(input_dim);
        return m * d + m + m * m * static_cast<std::size_t>(depth - 2);
    }

    [[nodiscard]] Eigen::Index layer_rows(int l) const { return l == depth - 1 ? 1 : width; }
    [[nodiscard]] Eigen::Index layer_cols(int l) const { return l == 0 ? input_dim : width; }

    [[nodiscard]] std::size_t layer_offset(int l) const {
        std::size_t off = 0;
        for (int k = 0; k < l; ++k) off += static_cast<std::size_t>(layer_rows(k) * layer_cols(k));
        return off;
    }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Network weights stored as one flat vector (layer by layer, row-major inside
/// a layer) together with the frozen copy taken at initialization.
class NetworkParams {
public:
    using LayerView = Eigen::Map<const RowMatrix>;
    using MutableLayerView = Eigen::Map<RowMatrix>;

    NetworkParams(NetworkConfig config, Vector values)
        : config_(config), values_(std::move(values)), init_(values_) {
        config_.validate();
        expect_dim(static_cast<std::size_t>(values_.size()), config_.param_count(), "NetworkParams");
    }

    NetworkParams(NetworkConfig config, Vector values, Vector init)
        : config_(config), values_(std::move(values)), init_(std::move(init)) {
        config_.validate();
        expect_dim(static_cast<std::size_t>(values_.size()), config_.param_count(), "NetworkParams");
        expect_dim(static_cast<std::size_t>(init_.size()), config_.param_count(), "NetworkParams init");
    }

    [[nodiscard]] const NetworkConfig& config() const { return config_; }
    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    [[nodiscard]] const Vector& values() const { return values_; }
    [[nodiscard]] Vector& values() { return values_; }
    [[nodiscard]] const Vector& init_snapshot() const { return init_; }

    [[nodiscard]] LayerView layer(int l) const {
        return {values_.data() + config_.layer_offset(l), config_.layer_rows(l), config_.layer_cols(l)};
    }
    [[nodiscard]] MutableLayerView layer(int l) {
        return {values_.data() + config_.layer_offset(l), config_.layer_rows(l), config_.layer_cols(l)};
    }
    [[nodiscard]] LayerView init_layer(int l) const {
        return {init_.data() + config_.layer_offset(l), config_.layer_rows(l), config_.layer_cols(l)};
    }

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        return a.config_ == b.config_ && a.values_ == b.values_ && a.init_ == b.init_;
    }

private:
    NetworkConfig config_;
    Vector values_;
    Vector init_;
};

/// Block-symmetric Gaussian initialization: hidden layers are diag(Wbar, Wbar)
/// with N(0, 4/m) entries and the output layer is [w, -w] with N(0, 2/m)
/// entries, so the network is identically zero on inputs of the form [x, x].
inline NetworkParams init_symmetric(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int m = config.width;
    const int half = m / 2;
    Vector values = Vector::Zero(static_cast<Eigen::Index>(config.param_count()));
    const double hidden_std = std::sqrt(4.0 / m);
    const double out_std = std::sqrt(2.0 / m);

    for (int l = 0; l < config.depth - 1; ++l) {
        Eigen::Map<RowMatrix> w(values.data() + config.layer_offset(l), config.layer_rows(l),
                                config.layer_cols(l));
        const Eigen::Index in_half = config.layer_cols(l) / 2;
        for (Eigen::Index i = 0; i < half; ++i) {
            for (Eigen::Index j = 0; j < in_half; ++j) {
                const double v = hidden_std * standard_normal(rng);
                w(i, j) = v;
                w(i + half, j + in_half) = v;
            }
        }
    }
    Eigen::Map<RowMatrix> out(values.data() + config.layer_offset(config.depth - 1), 1, m);
    for (int i = 0; i < half; ++i) {
        const double v = out_std * standard_normal(rng);
        out(0, i) = v;
        out(0, i + half) = -v;
    }
    return NetworkParams(config, std::move(values));
}

namespace detail {

// Activations kept from a batched forward pass; column b belongs to sample b.
struct ForwardTrace {
    std::vector<Matrix> normalized;  // pre-activation after optional layer norm
    std::vector<Vector> inv_scale;   // 1/sqrt(var + eps) per sample, layer norm only
    std::vector<Matrix> activations; // relu outputs; activations[0] is the input
    Vector output;
};

inline ForwardTrace forward_trace(const NetworkParams& params, const Eigen::Ref<const Matrix>& inputs) {
    const NetworkConfig& cfg = params.config();
    expect_dim(static_cast<std::size_t>(inputs.rows()), static_cast<std::size_t>(cfg.input_dim),
               "network input");
    ForwardTrace tr;
    const int hidden = cfg.depth - 1;
    tr.normalized.resize(hidden);
    tr.inv_scale.resize(hidden);
    tr.activations.resize(hidden + 1);
    tr.activations[0] = inputs;
    for (int l = 0; l < hidden; ++l) {
        Matrix z = params.layer(l) * tr.activations[l];
        if (cfg.layer_norm) {
            const Eigen::Index n = z.rows();
            Vector inv(z.cols());
            for (Eigen::Index b = 0; b < z.cols(); ++b) {
                auto col = z.col(b);
                const double mean = col.mean();
                col.array() -= mean;
                const double var = col.squaredNorm() / static_cast<double>(n);
                inv[b] = 1.0 / std::sqrt(var + NetworkConfig::kLayerNormEps);
                col *= inv[b];
            }
            tr.inv_scale[l] = std::move(inv);
        }
        tr.activations[l + 1] = z.cwiseMax(0.0);
        tr.normalized[l] = std::move(z);
    }
    tr.output = std::sqrt(static_cast<double>(cfg.width)) *
                (params.layer(hidden) * tr.activations[hidden]).transpose();
    return tr;
}

// Writes sum_b coeffs[b] * grad f(x_b) into grad (length p).
inline void backward_accumulate(const NetworkParams& params, const ForwardTrace& tr, const Vector& coeffs,
                                Vector& grad) {
    const NetworkConfig& cfg = params.config();
    const int hidden = cfg.depth - 1;
    const double root_m = std::sqrt(static_cast<double>(cfg.width));
    grad.resize(static_cast<Eigen::Index>(cfg.param_count()));

    Eigen::Map<RowMatrix> g_out(grad.data() + cfg.layer_offset(hidden), 1, cfg.width);
    g_out.noalias() = root_m * coeffs.transpose() * tr.activations[hidden].transpose();

    // delta w.r.t. activations of the current hidden layer, one column per sample
    Matrix delta = root_m * params.layer(hidden).transpose() * coeffs.transpose();
    for (int l = hidden - 1; l >= 0; --l) {
        const Matrix& zhat = tr.normalized[l];
        delta = (zhat.array() > 0.0).select(delta, 0.0);
        if (cfg.layer_norm) {
            const double n = static_cast<double>(zhat.rows());
            for (Eigen::Index b = 0; b < delta.cols(); ++b) {
                auto col = delta.col(b);
                const double mean_g = col.sum() / n;
                const double mean_gz = col.dot(zhat.col(b)) / n;
                col = tr.inv_scale[l][b] * (col.array() - mean_g - zhat.col(b).array() * mean_gz).matrix();
            }
        }
        Eigen::Map<RowMatrix> g(grad.data() + cfg.layer_offset(l), cfg.layer_rows(l), cfg.layer_cols(l));
        g.noalias() = delta * tr.activations[l].transpose();
        if (l > 0) delta = params.layer(l).transpose() * delta;
    }
}

}  // namespace detail

inline double forward(const NetworkParams& params, const Eigen::Ref<const Vector>& u) {
    return detail::forward_trace(params, u).output[0];
}

/// Outputs for every column of `inputs` (d x B).
inline Vector forward_batch(const NetworkParams& params, const Eigen::Ref<const Matrix>& inputs) {
    return detail::forward_trace(params, inputs).output;
}

struct ValueAndGradient {
    double value;
    Vector gradient;
};

inline ValueAndGradient value_and_gradient(const NetworkParams& params, const Eigen::Ref<const Vector>& u) {
    const auto tr = detail::forward_trace(params, u);
    ValueAndGradient out{tr.output[0], Vector()};
    detail::backward_accumulate(params, tr, Vector::Ones(1), out.gradient);
    return out;
}

/// Exact gradient of forward() w.r.t. all weights, flattened in storage order.
/// The ReLU derivative at 0 is taken as 0.
inline Vector gradient(const NetworkParams& params, const Eigen::Ref<const Vector>& u) {
    return value_and_gradient(params, u).gradient;
}

/// Gradient of 0.5 (f(u) - r)^2 + (m lambda / 2) ||W - W0||^2.
inline Vector loss_gradient(const NetworkParams& params, const Eigen::Ref<const Vector>& u, double reward,
                            double lambda) {
    auto vg = value_and_gradient(params, u);
    const double m = params.config().width;
    vg.gradient *= (vg.value - reward);
    vg.gradient.noalias() += m * lambda * (params.values() - params.init_snapshot());
    return std::move(vg.gradient);
}

/// Gradient of (1/2B) sum_b (f(x_b) - r_b)^2 + (m lambda / 2) ||W - W0||^2 for
/// a batch whose inputs are the columns of `inputs`.
inline Vector batch_loss_gradient(const NetworkParams& params, const Eigen::Ref<const Matrix>& inputs,
                                  const Eigen::Ref<const Vector>& rewards, double lambda) {
    expect_dim(static_cast<std::size_t>(rewards.size()), static_cast<std::size_t>(inputs.cols()),
               "batch rewards");
    const auto tr = detail::forward_trace(params, inputs);
    const Vector coeffs = (tr.output - rewards) / static_cast<double>(inputs.cols());
    Vector grad;
    detail::backward_accumulate(params, tr, coeffs, grad);
    const double m = params.config().width;
    grad.noalias() += m * lambda * (params.values() - params.init_snapshot());
    return grad;
}

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    // SGD only: use eta_t = learning_rate / sqrt(t)
    bool inverse_sqrt_decay = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // coefficient of the (m lambda / 2) ||W - W0||^2 term
    double l2 = 1e-4;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (l2 < 0.0) throw ConfigError("l2 coefficient must be nonnegative");
        if (kind == OptimizerKind::Adam && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("Adam betas must lie in [0, 1)");
        }
    }
};

struct OptimizerState {
    OptimizerConfig config;
    Vector first_moment;
    Vector second_moment;
    std::uint64_t steps = 0;
    // index t used by the SGD 1/sqrt(t) schedule; 0 means "use steps"
    std::uint64_t schedule_t = 0;

    OptimizerState() = default;
    OptimizerState(const OptimizerConfig& cfg, std::size_t p)
        : config(cfg),
          first_moment(Vector::Zero(static_cast<Eigen::Index>(p))),
          second_moment(Vector::Zero(static_cast<Eigen::Index>(p))) {}
};

/// Applies one SGD or Adam update in place. SGD accepts a zero learning rate
/// (no-op); negative or NaN rates are rejected.
inline void optimizer_step(NetworkParams& params, OptimizerState& opt, const Eigen::Ref<const Vector>& grad) {
    expect_dim(static_cast<std::size_t>(grad.size()), params.size(), "optimizer gradient");
    const OptimizerConfig& c = opt.config;
    if (!(c.learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    ++opt.steps;
    const double t = static_cast<double>(opt.steps);
    Vector& w = params.values();
    if (c.kind == OptimizerKind::Sgd) {
        const double ts = opt.schedule_t > 0 ? static_cast<double>(opt.schedule_t) : t;
        const double eta = c.inverse_sqrt_decay ? c.learning_rate / std::sqrt(ts) : c.learning_rate;
        w.noalias() -= eta * grad;
        return;
    }
    if (opt.first_moment.size() != grad.size()) {
        opt.first_moment = Vector::Zero(grad.size());
        opt.second_moment = Vector::Zero(grad.size());
    }
    opt.first_moment = c.beta1 * opt.first_moment + (1.0 - c.beta1) * grad;
    opt.second_moment = c.beta2 * opt.second_moment + (1.0 - c.beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    w.array() -= c.learning_rate * (opt.first_moment.array() / bc1) /
                 ((opt.second_moment.array() / bc2).sqrt() + c.epsilon);
}

namespace io {

template <class T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("unexpected end of binary stream");
    return v;
}

inline void write_doubles(std::ostream& os, const Vector& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline Vector read_doubles(std::istream& is, Eigen::Index n) {
    Vector v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("unexpected end of binary stream");
    return v;
}

}  // namespace io

// Checkpoint layout: u32 L, u32 m, u32 d, u8 layer_norm, then p current
// weights and p initial weights as little-endian f64.
inline void write_checkpoint(std::ostream& os, const NetworkParams& params) {
    const auto& c = params.config();
    io::write_raw(os, static_cast<std::uint32_t>(c.depth));
    io::write_raw(os, static_cast<std::uint32_t>(c.width));
    io::write_raw(os, static_cast<std::uint32_t>(c.input_dim));
    io::write_raw(os, static_cast<std::uint8_t>(c.layer_norm ? 1 : 0));
    io::write_doubles(os, params.values());
    io::write_doubles(os, params.init_snapshot());
}

inline NetworkParams read_checkpoint(std::istream& is) {
    NetworkConfig c;
    c.depth = static_cast<int>(io::read_raw<std::uint32_t>(is));
    c.width = static_cast<int>(io::read_raw<std::uint32_t>(is));
    c.input_dim = static_cast<int>(io::read_raw<std::uint32_t>(is));
    c.layer_norm = io::read_raw<std::uint8_t>(is) != 0;
    c.validate();
    const auto p = static_cast<Eigen::Index>(c.param_count());
    Vector values = io::read_doubles(is, p);
    Vector init = io::read_doubles(is, p);
    return NetworkParams(c, std::move(values), std::move(init));
}

}  // namespace banditlab
