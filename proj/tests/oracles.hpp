#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Cholesky>

#include "banditlab/types.hpp"

namespace banditlab::testing {

// Inverse maintained by Sherman-Morrison, kept independent of the Cholesky path.
struct ShermanMorrison {
    Matrix inverse;
    ShermanMorrison(Eigen::Index p, double lambda) : inverse(Matrix::Identity(p, p) / lambda) {}
    void update(const Vector& v) {
        const Vector u = inverse * v;
        inverse -= (u * u.transpose()) / (1.0 + v.dot(u));
    }
    double bonus(const Vector& v) const { return std::sqrt(v.dot(inverse * v)); }
};

// One layer of the NTK recursion with both Gaussian expectations replaced by
// sample means over `draws` bivariate normals with covariance from `sigma`.
// Returns (Sigma, H~) of the next layer.
inline std::pair<Matrix, Matrix> monte_carlo_layer(const Matrix& sigma, const Matrix& h, int draws, Rng& rng) {
    const Eigen::Index n = sigma.rows();
    Matrix ns(n, n), nh(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            Eigen::Matrix2d cov;
            cov << sigma(i, i), sigma(i, j), sigma(i, j), sigma(j, j);
            Eigen::LLT<Eigen::Matrix2d> llt(cov + 1e-14 * Eigen::Matrix2d::Identity());
            const Eigen::Matrix2d chol = llt.matrixL();
            double s = 0.0, dd = 0.0;
            for (int q = 0; q < draws; ++q) {
                const Eigen::Vector2d z(standard_normal(rng), standard_normal(rng));
                const Eigen::Vector2d uv = chol * z;
                s += std::max(uv[0], 0.0) * std::max(uv[1], 0.0);
                dd += (uv[0] > 0.0 && uv[1] > 0.0) ? 1.0 : 0.0;
            }
            ns(i, j) = ns(j, i) = 2.0 * s / draws;
            nh(i, j) = nh(j, i) = 2.0 * h(i, j) * dd / draws + ns(i, j);
        }
    }
    return {ns, nh};
}

}  // namespace banditlab::testing
