#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "banditlab/nn.hpp"
#include "banditlab/types.hpp"

namespace banditlab {

struct NtkGram {
    Matrix H;
    int depth = 2;
    // Sigma^{(l)} and H~^{(l)} for l = 1..L (index l - 1), when retained.
    std::vector<Matrix> sigma;
    std::vector<Matrix> h_tilde;
};

namespace ntk {

inline constexpr double kRhoTolerance = 1e-9;

inline double clamp_correlation(double rho) {
    if (rho > 1.0 + kRhoTolerance || rho < -1.0 - kRhoTolerance) {
        throw NumericalError("NTK correlation " + std::to_string(rho) + " outside [-1, 1]");
    }
    return std::clamp(rho, -1.0, 1.0);
}

/// E[relu(u) relu(v)] for (u, v) ~ N(0, [[s1, c], [c, s2]]).
inline double relu_moment(double s1, double s2, double c) {
    const double scale = std::sqrt(s1 * s2);
    if (scale == 0.0) return 0.0;
    const double rho = clamp_correlation(c / scale);
    return scale / (2.0 * std::numbers::pi) *
           (std::sqrt(std::max(0.0, 1.0 - rho * rho)) + rho * (std::numbers::pi - std::acos(rho)));
}

/// E[relu'(u) relu'(v)] for the same Gaussian.
inline double relu_derivative_moment(double s1, double s2, double c) {
    const double scale = std::sqrt(s1 * s2);
    if (scale == 0.0) return 0.25;
    const double rho = clamp_correlation(c / scale);
    return (std::numbers::pi - std::acos(rho)) / (2.0 * std::numbers::pi);
}

}  // namespace ntk

/// NTK Gram matrix of a depth-L ReLU network over the rows of `contexts`
/// (N x d, unit-norm rows), using closed-form arc-cosine expectations.
inline NtkGram ntk_gram(const Matrix& contexts, int depth, bool retain_layers = false, double norm_tol = 1e-6) {
    if (depth < 2) throw ConfigError("NTK depth must be >= 2");
    for (Eigen::Index i = 0; i < contexts.rows(); ++i) {
        if (std::abs(contexts.row(i).norm() - 1.0) > norm_tol) {
            throw ConfigError("NTK input row " + std::to_string(i) + " is not unit norm");
        }
    }
    const Eigen::Index n = contexts.rows();
    Matrix sigma = contexts * contexts.transpose();
    Matrix h_tilde = sigma;
    NtkGram out;
    out.depth = depth;
    if (retain_layers) {
        out.sigma.push_back(sigma);
        out.h_tilde.push_back(h_tilde);
    }
    for (int l = 1; l < depth; ++l) {
        Matrix next_sigma(n, n);
        Matrix next_h(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                const double s1 = sigma(i, i);
                const double s2 = sigma(j, j);
                const double c = sigma(i, j);
                const double s = 2.0 * ntk::relu_moment(s1, s2, c);
                const double h = 2.0 * h_tilde(i, j) * ntk::relu_derivative_moment(s1, s2, c) + s;
                next_sigma(i, j) = next_sigma(j, i) = s;
                next_h(i, j) = next_h(j, i) = h;
            }
        }
        sigma = std::move(next_sigma);
        h_tilde = std::move(next_h);
        if (retain_layers) {
            out.sigma.push_back(sigma);
            out.h_tilde.push_back(h_tilde);
        }
    }
    out.H = (h_tilde + sigma) / 2.0;
    return out;
}

inline void require_symmetric(const Matrix& m, double tol = 1e-10) {
    if (m.rows() != m.cols()) throw DimensionError("matrix is not square");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale) throw DimensionError("matrix is not symmetric");
}

/// Smallest eigenvalue lambda_0 of a symmetric matrix.
inline double min_eigenvalue(const Matrix& h) {
    require_symmetric(h);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    return solver.eigenvalues()[0];
}

/// log det(I + H / lambda) / log(1 + n K / lambda) for an (nK) x (nK) PSD H.
inline double effective_dim(const Matrix& h, double lambda, std::size_t n, std::size_t num_actions) {
    if (!(lambda > 0.0)) throw ConfigError("effective dimension needs lambda > 0");
    const std::size_t nk = n * num_actions;
    expect_dim(static_cast<std::size_t>(h.rows()), nk, "NTK Gram rows");
    require_symmetric(h);
    Matrix a = Matrix::Identity(h.rows(), h.cols()) + h / lambda;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("I + H / lambda is not positive definite");
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return log_det / std::log(1.0 + static_cast<double>(nk) / lambda);
}

/// <grad f_{W0}(x_i), grad f_{W0}(x_j)> / m over the rows of `contexts`.
inline Matrix empirical_gram(const NetworkParams& init, const Matrix& contexts) {
    expect_dim(static_cast<std::size_t>(contexts.cols()), static_cast<std::size_t>(init.config().input_dim),
               "empirical Gram contexts");
    Matrix g(static_cast<Eigen::Index>(init.size()), contexts.rows());
    for (Eigen::Index i = 0; i < contexts.rows(); ++i) g.col(i) = gradient(init, contexts.row(i).transpose());
    return (g.transpose() * g) / static_cast<double>(init.config().width);
}

}  // namespace banditlab
