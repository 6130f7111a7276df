#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "skinfit/anim.hpp"
#include "skinfit/error.hpp"

namespace skinfit {

struct SolverConfig {
    /// Full (weight fit, transform fit) rounds after the initial transform fit.
    std::size_t alternation_iterations = 5;
    /// Stop when ||A^T (b - Ax)|| / ||A^T b|| falls to this value.
    double cg_tolerance = 1e-10;
    /// 0 selects 10 x (number of unknowns).
    std::size_t cg_max_iterations = 0;
    /// Weight of the sum-to-one row in each vertex's weight system.
    double convexity_row_scale = 1.0;
    /// Tikhonov term added to rank-deficient transform systems.
    double rank_damping = 1e-8;

    void validate() const;
};

/// y = Op(x); the output span is pre-sized by the caller.
using LinearOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

struct CglsResult {
    Eigen::VectorXd x;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Conjugate gradient on the normal equations of min ||Ax - b||^2 + damping ||x||^2,
/// matrix-free. `apply_a` maps R^cols -> R^rows (rows = b.size()), `apply_at`
/// is its adjoint. Starts from `x0` when given, zero otherwise. Stops once
/// ||A^T (b - Ax) - damping x|| <= tolerance * ||A^T b||, or after
/// max_iterations with converged = false.
CglsResult cgls(const LinearOperator& apply_a, const LinearOperator& apply_at, std::span<const double> b,
                std::size_t cols, double tolerance, std::size_t max_iterations, double damping = 0.0,
                std::span<const double> x0 = {});

/// Same, with tolerance and iteration cap taken from `config`.
CglsResult cgls(const LinearOperator& apply_a, const LinearOperator& apply_at, std::span<const double> b,
                std::size_t cols, const SolverConfig& config);

/// Active-set (Lawson-Hanson) non-negative least squares in Gram form:
/// minimizes x^T G x - 2 h^T x over x >= 0, with G = A^T A and h = A^T b.
Eigen::VectorXd nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs);

/// min ||Ax - b|| subject to x >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

/// Per-frame least-squares fit of all bone transforms for fixed weights.
///
/// Frames are independent: each solves a 3N-equation, 12B-unknown problem
/// with cgls. When `warm_start` is given it seeds CG, and a frame whose new
/// fit is not better than the warm start keeps the warm start. A bone with
/// zero total influence or a singular 4x4 rest-pose moment makes the system
/// rank deficient; it is damped by config.rank_damping and reported in `diag`.
BoneTransformSet solve_transforms(const AnimSequence& seq, const WeightMap& weights, std::size_t bone_count,
                                  const SolverConfig& config = {}, Diagnostics* diag = nullptr,
                                  const BoneTransformSet* warm_start = nullptr);

/// Per-vertex non-negative fit of the weights on each vertex's existing
/// support (the bones listed in `current`), with one sum-to-one row scaled
/// by config.convexity_row_scale, followed by exact renormalization. A
/// vertex keeps its current weights when the new ones do not lower its
/// residual or when the fit degenerates (reported in `diag`).
WeightMap solve_weights(const AnimSequence& seq, const BoneTransformSet& transforms, const WeightMap& current,
                        const SolverConfig& config = {}, Diagnostics* diag = nullptr);

/// Equal weights over each vertex's candidate bones.
WeightMap uniform_weights(const std::vector<std::vector<std::uint32_t>>& support);

/// Sum over frames and vertices of the squared LBS reconstruction error.
double skinning_objective(const AnimSequence& seq, const WeightMap& weights, const BoneTransformSet& transforms);

enum class StepKind { WeightFit, TransformFit };
std::string_view to_string(StepKind kind);

struct TraceEntry {
    std::size_t step_index = 0;
    StepKind kind = StepKind::TransformFit;
    double objective = 0.0;
    double erms = 0.0;
};

struct FitTrace {
    std::vector<TraceEntry> entries;

    /// CSV with header step_index,kind,objective,erms.
    void write_csv(std::ostream& out) const;
};

struct AlternationResult {
    SkinningModel model;
    FitTrace trace;
};

/// Initial transform fit against `initial_weights`, then
/// config.alternation_iterations rounds of (weight fit, transform fit) with
/// the per-vertex bone support held fixed. Every half-step is traced.
AlternationResult alternate(const AnimSequence& seq, const WeightMap& initial_weights, std::size_t bone_count,
                            const SolverConfig& config = {}, Diagnostics* diag = nullptr);

}  // namespace skinfit
