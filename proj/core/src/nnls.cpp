#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "skinfit/fitting.hpp"

namespace skinfit {

Eigen::VectorXd nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
    const Eigen::Index n = rhs.size();
    if (gram.rows() != n || gram.cols() != n) throw ShapeError("nnls: Gram matrix and right-hand side disagree");

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n == 0) return x;
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-13 * std::max(1.0, rhs.cwiseAbs().maxCoeff()) * std::max<double>(1.0, static_cast<double>(n));

    // Solves the unconstrained problem restricted to the passive set.
    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd g(k, k);
        Eigen::VectorXd h(k);
        for (Eigen::Index a = 0; a < k; ++a) {
            h(a) = rhs(idx[static_cast<std::size_t>(a)]);
            for (Eigen::Index b = 0; b < k; ++b) g(a, b) = gram(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
        const Eigen::VectorXd sol = g.completeOrthogonalDecomposition().solve(h);
        z.setZero(n);
        for (Eigen::Index a = 0; a < k; ++a) z(idx[static_cast<std::size_t>(a)]) = sol(a);
    };

    const int max_outer = 3 * static_cast<int>(n) + 10;
    for (int outer = 0; outer < max_outer; ++outer) {
        const Eigen::VectorXd w = rhs - gram * x;
        Eigen::Index enter = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
                best = w(j);
                enter = j;
            }
        }
        if (enter < 0) break;
        passive[static_cast<std::size_t>(enter)] = true;

        Eigen::VectorXd z;
        for (int inner = 0; inner <= static_cast<int>(n); ++inner) {
            solve_passive(z);
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) feasible = false;
            }
            if (feasible) break;

            // Step toward z until the first passive coordinate hits zero.
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
            }
            x += alpha * (z - x);
            for (Eigen::Index j = 0; j < n; ++j) {
                if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
            }
        }
        for (Eigen::Index j = 0; j < n; ++j) x(j) = passive[static_cast<std::size_t>(j)] ? std::max(z(j), 0.0) : 0.0;
    }
    return x;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    if (a.rows() != b.size()) throw ShapeError("nnls: matrix rows and right-hand side length differ");
    return nnls_gram(a.transpose() * a, a.transpose() * b);
}

}  // namespace skinfit
