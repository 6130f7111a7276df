#include <cmath>

#include "skinfit/fitting.hpp"

namespace skinfit {

namespace {

Eigen::VectorXd apply(const LinearOperator& op, const Eigen::VectorXd& x, Eigen::Index out_size) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(out_size);
    op(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
       std::span<double>(y.data(), static_cast<std::size_t>(y.size())));
    return y;
}

}  // namespace

CglsResult cgls(const LinearOperator& apply_a, const LinearOperator& apply_at, std::span<const double> b,
                std::size_t cols, double tolerance, std::size_t max_iterations, double damping,
                std::span<const double> x0) {
    const auto m = static_cast<Eigen::Index>(b.size());
    const auto n = static_cast<Eigen::Index>(cols);
    const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), m);
    if (!x0.empty() && x0.size() != cols) throw ShapeError("cgls: initial guess has wrong length");

    CglsResult result;
    const double ref = apply(apply_at, rhs, n).norm();
    if (ref == 0.0) {
        result.x = Eigen::VectorXd::Zero(n);
        result.converged = true;
        return result;
    }

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (!x0.empty()) x = Eigen::Map<const Eigen::VectorXd>(x0.data(), n);
    Eigen::VectorXd r = x0.empty() ? Eigen::VectorXd(rhs) : Eigen::VectorXd(rhs - apply(apply_a, x, m));
    Eigen::VectorXd s = apply(apply_at, r, n) - damping * x;
    Eigen::VectorXd p = s;
    double gamma = s.squaredNorm();
    result.relative_residual = std::sqrt(gamma) / ref;

    while (result.relative_residual > tolerance && result.iterations < max_iterations) {
        const Eigen::VectorXd q = apply(apply_a, p, m);
        const double delta = q.squaredNorm() + damping * p.squaredNorm();
        if (!(delta > 0.0)) break;
        const double alpha = gamma / delta;
        x += alpha * p;
        r -= alpha * q;
        s = apply(apply_at, r, n) - damping * x;
        const double gamma_next = s.squaredNorm();
        ++result.iterations;
        result.relative_residual = std::sqrt(gamma_next) / ref;
        p = s + (gamma_next / gamma) * p;
        gamma = gamma_next;
    }
    result.converged = result.relative_residual <= tolerance;
    result.x = std::move(x);
    return result;
}

CglsResult cgls(const LinearOperator& apply_a, const LinearOperator& apply_at, std::span<const double> b,
                std::size_t cols, const SolverConfig& config) {
    const std::size_t cap = config.cg_max_iterations == 0 ? 10 * cols : config.cg_max_iterations;
    return cgls(apply_a, apply_at, b, cols, config.cg_tolerance, cap);
}

}  // namespace skinfit
