#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <variant>

#include "banditlab/nn.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

enum class CovarianceMode { Full, Diagonal };

/// Default switch point: above this many parameters the diagonal
/// approximation is used.
inline constexpr std::size_t kDiagonalThreshold = 10000;

inline CovarianceMode default_covariance_mode(std::size_t p, std::size_t threshold = kDiagonalThreshold) {
    return p > threshold ? CovarianceMode::Diagonal : CovarianceMode::Full;
}

/// Regularized design matrix Lambda_t = lambda I + sum_i v_i v_i^T, kept either
/// in full (with its Cholesky factor updated in place) or as its diagonal.
class CovarianceState {
public:
    CovarianceState() = default;

    CovarianceState(std::size_t p, double lambda, CovarianceMode mode) : mode_(mode), lambda_(lambda) {
        if (p < 1) throw ConfigError("covariance dimension must be >= 1");
        if (!(lambda > 0.0)) throw ConfigError("covariance regularization lambda must be positive");
        const auto n = static_cast<Eigen::Index>(p);
        if (mode == CovarianceMode::Full) {
            matrix_ = lambda * Matrix::Identity(n, n);
            factor_ = std::sqrt(lambda) * Matrix::Identity(n, n);
        } else {
            diagonal_ = Vector::Constant(n, lambda);
        }
    }

    [[nodiscard]] CovarianceMode mode() const { return mode_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] std::uint64_t updates() const { return updates_; }
    [[nodiscard]] std::size_t dim() const {
        return static_cast<std::size_t>(mode_ == CovarianceMode::Full ? matrix_.rows() : diagonal_.size());
    }

    /// Full mode only.
    [[nodiscard]] const Matrix& matrix() const { return matrix_; }
    /// Diagonal entries in either mode.
    [[nodiscard]] Vector diagonal() const { return mode_ == CovarianceMode::Full ? Vector(matrix_.diagonal()) : diagonal_; }

    void rank1_update(const Eigen::Ref<const Vector>& v) {
        expect_dim(static_cast<std::size_t>(v.size()), dim(), "covariance update");
        if (mode_ == CovarianceMode::Full) {
            matrix_.noalias() += v * v.transpose();
            cholesky_rank1_update(v);
        } else {
            diagonal_.array() += v.array().square();
        }
        ++updates_;
    }

    /// ||v||_{Lambda^{-1}}. Full mode uses triangular solves with the maintained
    /// Cholesky factor; no inverse is formed.
    [[nodiscard]] double bonus(const Eigen::Ref<const Vector>& v) const {
        expect_dim(static_cast<std::size_t>(v.size()), dim(), "covariance bonus");
        if (mode_ == CovarianceMode::Diagonal) {
            return std::sqrt((v.array().square() / diagonal_.array()).sum());
        }
        const Vector y = factor_.triangularView<Eigen::Lower>().solve(v);
        return y.norm();
    }

    /// Lambda^{-1} b.
    [[nodiscard]] Vector solve(const Eigen::Ref<const Vector>& b) const {
        expect_dim(static_cast<std::size_t>(b.size()), dim(), "covariance solve");
        if (mode_ == CovarianceMode::Diagonal) return b.cwiseQuotient(diagonal_);
        const Vector y = factor_.triangularView<Eigen::Lower>().solve(b);
        return factor_.triangularView<Eigen::Lower>().transpose().solve(y);
    }

    /// Full-mode state from an explicitly accumulated Lambda (e.g. lambda I + X^T X).
    static CovarianceState from_matrix(Matrix lambda_matrix, double lambda, std::uint64_t updates) {
        CovarianceState s(static_cast<std::size_t>(lambda_matrix.rows()), lambda, CovarianceMode::Full);
        expect_dim(static_cast<std::size_t>(lambda_matrix.cols()), s.dim(), "covariance matrix");
        s.matrix_ = std::move(lambda_matrix);
        s.updates_ = updates;
        s.refactor();
        return s;
    }

    /// Diagonal-mode state from explicit diagonal entries.
    static CovarianceState from_diagonal(Vector diagonal, double lambda, std::uint64_t updates) {
        CovarianceState s(static_cast<std::size_t>(diagonal.size()), lambda, CovarianceMode::Diagonal);
        s.diagonal_ = std::move(diagonal);
        s.updates_ = updates;
        return s;
    }

    /// log det(Lambda / lambda).
    [[nodiscard]] double log_det_ratio() const {
        if (mode_ == CovarianceMode::Diagonal) return (diagonal_.array() / lambda_).log().sum();
        return 2.0 * (factor_.diagonal().array() / std::sqrt(lambda_)).log().sum();
    }

    void write(std::ostream& os) const {
        io::write_raw(os, static_cast<std::uint8_t>(mode_ == CovarianceMode::Full ? 0 : 1));
        io::write_raw(os, static_cast<std::uint64_t>(dim()));
        io::write_raw(os, lambda_);
        io::write_raw(os, updates_);
        if (mode_ == CovarianceMode::Full) {
            io::write_doubles(os, Eigen::Map<const Vector>(matrix_.data(), matrix_.size()));
        } else {
            io::write_doubles(os, diagonal_);
        }
    }

    static CovarianceState read(std::istream& is) {
        const auto mode = io::read_raw<std::uint8_t>(is) == 0 ? CovarianceMode::Full : CovarianceMode::Diagonal;
        const auto p = static_cast<Eigen::Index>(io::read_raw<std::uint64_t>(is));
        const double lambda = io::read_raw<double>(is);
        CovarianceState s(static_cast<std::size_t>(p), lambda, mode);
        s.updates_ = io::read_raw<std::uint64_t>(is);
        if (mode == CovarianceMode::Full) {
            const Vector flat = io::read_doubles(is, p * p);
            s.matrix_ = Eigen::Map<const Matrix>(flat.data(), p, p);
            s.refactor();
        } else {
            s.diagonal_ = io::read_doubles(is, p);
        }
        return s;
    }

private:
    // Standard O(p^2) update of the lower Cholesky factor for L L^T + v v^T.
    void cholesky_rank1_update(const Eigen::Ref<const Vector>& v) {
        Vector x = v;
        const Eigen::Index n = x.size();
        for (Eigen::Index k = 0; k < n; ++k) {
            const double lkk = factor_(k, k);
            const double r = std::hypot(lkk, x[k]);
            if (!(r > 0.0) || !std::isfinite(r)) {
                throw NumericalError("covariance lost positive definiteness: pivot " + std::to_string(k) +
                                     " = " + std::to_string(r));
            }
            const double c = r / lkk;
            const double s = x[k] / lkk;
            factor_(k, k) = r;
            if (k + 1 < n) {
                auto col = factor_.col(k).tail(n - k - 1);
                auto rest = x.tail(n - k - 1);
                col = (col + s * rest) / c;
                rest = c * rest - s * col;
            }
        }
    }

    void refactor() {
        Eigen::LLT<Matrix> llt(matrix_);
        if (llt.info() != Eigen::Success) {
            const Eigen::LDLT<Matrix> ldlt(matrix_);
            throw NumericalError("covariance matrix is not positive definite; smallest pivot " +
                                 std::to_string(ldlt.vectorD().minCoeff()));
        }
        factor_ = llt.matrixL();
    }

    CovarianceMode mode_ = CovarianceMode::Diagonal;
    double lambda_ = 1.0;
    std::uint64_t updates_ = 0;
    Matrix matrix_;
    Matrix factor_;
    Vector diagonal_;
};

inline CovarianceState new_covariance(std::size_t p, double lambda, CovarianceMode mode) {
    return CovarianceState(p, lambda, mode);
}

/// Parameters of the width-dependent confidence radius
///   beta_t = sqrt(lambda + C3^2 t L) (sqrt(t / lambda) + sqrt(n K / lambda0)) / sqrt(m).
struct TheoreticalBeta {
    double lambda = 1.0;
    int depth = 2;
    int width = 100;
    std::size_t n = 1;
    std::size_t num_actions = 1;
    double lambda0 = 1.0;
    double c3 = 1.0;
};

struct ConstantBeta {
    double beta = 0.05;
};

using BetaSchedule = std::variant<ConstantBeta, TheoreticalBeta>;

inline double beta_at(const BetaSchedule& schedule, std::uint64_t t) {
    if (const auto* c = std::get_if<ConstantBeta>(&schedule)) return c->beta;
    const auto& s = std::get<TheoreticalBeta>(schedule);
    if (!(s.lambda > 0.0 && s.depth > 0 && s.width > 0 && s.lambda0 > 0.0 && s.c3 > 0.0)) {
        throw ConfigError("theoretical beta schedule requires positive parameters");
    }
    const double td = static_cast<double>(t);
    const double radius = std::sqrt(s.lambda + s.c3 * s.c3 * td * s.depth);
    const double nk = static_cast<double>(s.n * s.num_actions);
    const double inv_lambda0 = std::isinf(s.lambda0) ? 0.0 : 1.0 / s.lambda0;
    return radius * (std::sqrt(td / s.lambda) + std::sqrt(nk * inv_lambda0)) / std::sqrt(static_cast<double>(s.width));
}

}  // namespace banditlab
