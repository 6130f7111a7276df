#include "skinfit/fitting.hpp"

#include <cmath>
#include <ostream>
#include <iomanip>
#include <sstream>

#include <Eigen/Dense>

#include "skinfit/metrics.hpp"

namespace skinfit {

namespace {

constexpr double kRankTolerance = 1e-12;

// Unknowns for one frame: bone j's 3x4 block stored row-major at [12j, 12j+12).
void pack(std::span<const Affine34> frame, Eigen::VectorXd& x) {
    x.resize(static_cast<Eigen::Index>(12 * frame.size()));
    for (std::size_t j = 0; j < frame.size(); ++j) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) x(static_cast<Eigen::Index>(12 * j) + 4 * r + c) = frame[j](r, c);
        }
    }
}

void unpack(const Eigen::VectorXd& x, std::span<Affine34> frame) {
    for (std::size_t j = 0; j < frame.size(); ++j) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) frame[j](r, c) = x(static_cast<Eigen::Index>(12 * j) + 4 * r + c);
        }
    }
}

double frame_objective(const AnimSequence& seq, const WeightMap& weights, std::span<const Affine34> frame,
                       std::size_t p) {
    CompensatedSum sum;
    const auto rest = seq.rest_pose();
    const auto target = seq.frame(p);
    for (std::size_t i = 0; i < rest.size(); ++i) {
        sum.add((lbs_vertex(rest[i], weights[i], frame) - target[i]).squaredNorm());
    }
    return sum.value();
}

double vertex_residual(const AnimSequence& seq, const BoneTransformSet& transforms, std::size_t i,
                       std::span<const Influence> influences) {
    CompensatedSum sum;
    const Vec3& rest = seq.rest_pose()[i];
    for (std::size_t p = 0; p < seq.frame_count(); ++p) {
        sum.add((lbs_vertex(rest, influences, transforms.frame(p)) - seq.position(p, i)).squaredNorm());
    }
    return sum.value();
}

// Reports bones whose columns in the transform system are (numerically) rank deficient.
std::vector<std::size_t> deficient_bones(const AnimSequence& seq, const WeightMap& weights, std::size_t bone_count) {
    std::vector<Eigen::Matrix4d> moments(bone_count, Eigen::Matrix4d::Zero());
    const auto rest = seq.rest_pose();
    for (std::size_t i = 0; i < rest.size(); ++i) {
        const Eigen::Vector4d h(rest[i].x(), rest[i].y(), rest[i].z(), 1.0);
        for (const auto& inf : weights[i]) moments[inf.bone] += inf.weight * inf.weight * h * h.transpose();
    }
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < bone_count; ++j) {
        const Eigen::Vector4d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(moments[j]).eigenvalues();
        if (!(ev.maxCoeff() > 0.0) || ev.minCoeff() <= kRankTolerance * ev.maxCoeff()) out.push_back(j);
    }
    return out;
}

}  // namespace

void SolverConfig::validate() const {
    if (!(cg_tolerance > 0.0)) throw InvariantError("cg tolerance must be positive");
    if (!(convexity_row_scale > 0.0)) throw InvariantError("convexity row scale must be positive");
    if (!(rank_damping > 0.0)) throw InvariantError("rank damping must be positive");
}

WeightMap uniform_weights(const std::vector<std::vector<std::uint32_t>>& support) {
    WeightMap w;
    w.vertices.resize(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        for (auto bone : support[i]) {
            w.vertices[i].push_back({bone, 1.0 / static_cast<double>(support[i].size())});
        }
    }
    return w;
}

double skinning_objective(const AnimSequence& seq, const WeightMap& weights, const BoneTransformSet& transforms) {
    if (transforms.frame_count() != seq.frame_count()) throw ShapeError("transform frame count differs from sequence");
    if (weights.vertex_count() != seq.vertex_count()) throw ShapeError("weight map vertex count differs from sequence");
    CompensatedSum sum;
    for (std::size_t p = 0; p < seq.frame_count(); ++p) sum.add(frame_objective(seq, weights, transforms.frame(p), p));
    return sum.value();
}

BoneTransformSet solve_transforms(const AnimSequence& seq, const WeightMap& weights, std::size_t bone_count,
                                  const SolverConfig& config, Diagnostics* diag, const BoneTransformSet* warm_start) {
    config.validate();
    if (weights.vertex_count() != seq.vertex_count()) throw ShapeError("weight map vertex count differs from sequence");
    validate_weights(weights, bone_count);
    if (warm_start != nullptr &&
        (warm_start->frame_count() != seq.frame_count() || warm_start->bone_count() != bone_count)) {
        throw ShapeError("warm-start transforms have the wrong shape");
    }

    double damping = 0.0;
    if (const auto bad = deficient_bones(seq, weights, bone_count); !bad.empty()) {
        std::ostringstream msg;
        msg << "transform fit is rank deficient for bone(s)";
        for (auto j : bad) msg << ' ' << j;
        msg << "; damping with " << config.rank_damping;
        warn(diag, msg.str());
        damping = config.rank_damping;
    }

    const auto rest = seq.rest_pose();
    const std::size_t n = rest.size();
    const std::size_t unknowns = 12 * bone_count;

    // A maps the 12B transform entries of one frame to the 3N blended vertex coordinates.
    const LinearOperator apply_a = [&](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector4d h(rest[i].x(), rest[i].y(), rest[i].z(), 1.0);
            Eigen::Vector3d v = Eigen::Vector3d::Zero();
            for (const auto& inf : weights[i]) {
                const Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>> t(x.data() + 12 * inf.bone);
                v += inf.weight * (t * h);
            }
            y[3 * i] = v.x();
            y[3 * i + 1] = v.y();
            y[3 * i + 2] = v.z();
        }
    };
    const LinearOperator apply_at = [&](std::span<const double> y, std::span<double> x) {
        std::fill(x.begin(), x.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector4d h(rest[i].x(), rest[i].y(), rest[i].z(), 1.0);
            const Eigen::Vector3d r(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
            for (const auto& inf : weights[i]) {
                Eigen::Map<Eigen::Matrix<double, 3, 4, Eigen::RowMajor>> g(x.data() + 12 * inf.bone);
                g.noalias() += inf.weight * r * h.transpose();
            }
        }
    };

    const std::size_t cap = config.cg_max_iterations == 0 ? 10 * unknowns : config.cg_max_iterations;
    BoneTransformSet out(seq.frame_count(), bone_count);
    std::vector<double> b(3 * n);
    Eigen::VectorXd x0;
    std::size_t unconverged = 0;
    for (std::size_t p = 0; p < seq.frame_count(); ++p) {
        const auto target = seq.frame(p);
        for (std::size_t i = 0; i < n; ++i) {
            b[3 * i] = target[i].x();
            b[3 * i + 1] = target[i].y();
            b[3 * i + 2] = target[i].z();
        }
        std::span<const double> start;
        if (warm_start != nullptr) {
            pack(warm_start->frame(p), x0);
            start = std::span<const double>(x0.data(), unknowns);
        }
        const CglsResult fit = cgls(apply_a, apply_at, b, unknowns, config.cg_tolerance, cap, damping, start);
        if (!fit.converged) ++unconverged;
        unpack(fit.x, out.frame(p));

        if (warm_start != nullptr) {
            const double fresh = frame_objective(seq, weights, out.frame(p), p);
            const double previous = frame_objective(seq, weights, warm_start->frame(p), p);
            if (!(fresh <= previous)) {
                auto dst = out.frame(p);
                auto src = warm_start->frame(p);
                std::copy(src.begin(), src.end(), dst.begin());
            }
        }
    }
    if (unconverged > 0) {
        warn(diag, "conjugate gradient did not reach tolerance in " + std::to_string(unconverged) + " frame(s)");
    }
    return out;
}

WeightMap solve_weights(const AnimSequence& seq, const BoneTransformSet& transforms, const WeightMap& current,
                        const SolverConfig& config, Diagnostics* diag) {
    config.validate();
    if (current.vertex_count() != seq.vertex_count()) throw ShapeError("weight map vertex count differs from sequence");
    if (transforms.frame_count() != seq.frame_count()) throw ShapeError("transform frame count differs from sequence");
    validate_weights(current, transforms.bone_count());

    const double scale = config.convexity_row_scale;
    const auto rest = seq.rest_pose();
    WeightMap out = current;
    std::size_t degenerate = 0;

    for (std::size_t i = 0; i < rest.size(); ++i) {
        const auto& support = current.vertices[i];
        const auto k = static_cast<Eigen::Index>(support.size());
        if (k == 1) {
            out.vertices[i][0].weight = 1.0;
            continue;
        }

        // Columns: bone j's transform applied to the rest position, stacked over frames.
        // Gram form of the (3P+1) x k system, the last row being the convexity equation.
        Eigen::MatrixXd gram = Eigen::MatrixXd::Constant(k, k, scale * scale);
        Eigen::VectorXd rhs = Eigen::VectorXd::Constant(k, scale * scale);
        Eigen::MatrixXd cols(3, k);
        double column_mass = 0.0;
        for (std::size_t p = 0; p < seq.frame_count(); ++p) {
            const auto frame = transforms.frame(p);
            for (Eigen::Index a = 0; a < k; ++a) cols.col(a) = apply(frame[support[static_cast<std::size_t>(a)].bone], rest[i]);
            gram.noalias() += cols.transpose() * cols;
            rhs.noalias() += cols.transpose() * seq.position(p, i);
            column_mass += cols.squaredNorm();
        }
        if (!(column_mass > 0.0)) {
            ++degenerate;
            continue;
        }

        const Eigen::VectorXd w = nnls_gram(gram, rhs);
        const double sum = w.sum();
        if (!(sum > 0.0) || !w.allFinite()) {
            ++degenerate;
            continue;
        }
        std::vector<Influence> candidate = support;
        for (Eigen::Index a = 0; a < k; ++a) candidate[static_cast<std::size_t>(a)].weight = w(a) / sum;
        if (vertex_residual(seq, transforms, i, candidate) <= vertex_residual(seq, transforms, i, support)) {
            out.vertices[i] = std::move(candidate);
        }
    }
    if (degenerate > 0) {
        warn(diag, "weight fit degenerate for " + std::to_string(degenerate) + " vertex(es); kept previous weights");
    }
    return out;
}

std::string_view to_string(StepKind kind) { return kind == StepKind::WeightFit ? "WF" : "TF"; }

void FitTrace::write_csv(std::ostream& out) const {
    out << "step_index,kind,objective,erms\n" << std::setprecision(17);
    for (const auto& e : entries) out << e.step_index << ',' << to_string(e.kind) << ',' << e.objective << ',' << e.erms << '\n';
}

AlternationResult alternate(const AnimSequence& seq, const WeightMap& initial_weights, std::size_t bone_count,
                            const SolverConfig& config, Diagnostics* diag) {
    config.validate();
    validate_weights(initial_weights, bone_count);
    if (initial_weights.vertex_count() != seq.vertex_count()) {
        throw ShapeError("initial weights cover " + std::to_string(initial_weights.vertex_count()) +
                         " vertices, sequence has " + std::to_string(seq.vertex_count()));
    }

    const auto rest = seq.rest_pose();
    const auto faces = seq.faces();
    AlternationResult result;
    SkinningModel& model = result.model;
    model.rest_pose.assign(rest.begin(), rest.end());
    model.faces.assign(faces.begin(), faces.end());
    model.weights = initial_weights;

    const double coords = 3.0 * static_cast<double>(seq.vertex_count()) * static_cast<double>(seq.frame_count());
    auto record = [&](StepKind kind) {
        const double objective = skinning_objective(seq, model.weights, model.transforms);
        const std::size_t index = result.trace.entries.size();
        result.trace.entries.push_back({index, kind, objective, 100.0 * std::sqrt(objective / coords)});
    };

    model.transforms = solve_transforms(seq, model.weights, bone_count, config, diag);
    record(StepKind::TransformFit);
    for (std::size_t round = 0; round < config.alternation_iterations; ++round) {
        model.weights = solve_weights(seq, model.transforms, model.weights, config, diag);
        record(StepKind::WeightFit);
        model.transforms = solve_transforms(seq, model.weights, bone_count, config, diag, &model.transforms);
        record(StepKind::TransformFit);
    }
    return result;
}

}  // namespace skinfit
