#include "skinfit/anim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "skinfit/error.hpp"
#include "skinfit/rng.hpp"

namespace skinfit {

namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

AnimSequence::AnimSequence(std::vector<Vec3> rest_pose, std::vector<Vec3> positions, std::size_t frame_count,
                           std::vector<Face> faces)
    : rest_pose_(std::move(rest_pose)),
      positions_(std::move(positions)),
      frame_count_(frame_count),
      faces_(std::move(faces)) {
    const std::size_t n = rest_pose_.size();
    if (n == 0) throw InvariantError("animation has no vertices");
    if (frame_count_ == 0) throw InvariantError("animation has no frames");
    if (positions_.size() != n * frame_count_) {
        std::ostringstream msg;
        msg << "animation positions: expected " << n << " x " << frame_count_ << " = " << n * frame_count_
            << " values, got " << positions_.size();
        throw ShapeError(msg.str());
    }
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        for (auto idx : faces_[f]) {
            if (idx >= n) {
                std::ostringstream msg;
                msg << "face " << f << " references vertex " << idx << " but N = " << n;
                throw IndexError(msg.str());
            }
        }
    }
    if (!std::all_of(rest_pose_.begin(), rest_pose_.end(), finite) ||
        !std::all_of(positions_.begin(), positions_.end(), finite)) {
        throw InvariantError("animation contains non-finite coordinates");
    }
}

AnimSequence AnimSequence::with_rest_from_frame(std::size_t p) const {
    if (p >= frame_count_) throw IndexError("rest frame " + std::to_string(p) + " out of range");
    auto rest = frame(p);
    return AnimSequence(std::vector<Vec3>(rest.begin(), rest.end()), positions_, frame_count_, faces_);
}

BoneTransformSet::BoneTransformSet(std::size_t frame_count, std::size_t bone_count)
    : frame_count_(frame_count), bone_count_(bone_count), transforms_(frame_count * bone_count, Affine34::Zero()) {}

BoneTransformSet BoneTransformSet::identity(std::size_t frame_count, std::size_t bone_count) {
    BoneTransformSet set(frame_count, bone_count);
    for (auto& t : set.transforms_) t = Affine34::Identity();
    return set;
}

bool BoneTransformSet::all_finite() const {
    return std::all_of(transforms_.begin(), transforms_.end(), [](const Affine34& t) { return t.allFinite(); });
}

std::string weight_violation(const WeightMap& weights, std::size_t bone_count) {
    for (std::size_t i = 0; i < weights.vertices.size(); ++i) {
        const auto& list = weights.vertices[i];
        std::ostringstream msg;
        msg << "vertex " << i << ": ";
        if (list.empty()) return msg.str() + "no influences";
        if (list.size() > kMaxInfluences) {
            msg << list.size() << " influences (max " << kMaxInfluences << ")";
            return msg.str();
        }
        double sum = 0.0;
        for (std::size_t a = 0; a < list.size(); ++a) {
            if (list[a].bone >= bone_count) {
                msg << "bone " << list[a].bone << " >= bone count " << bone_count;
                return msg.str();
            }
            if (!(list[a].weight >= 0.0) || !std::isfinite(list[a].weight)) {
                msg << "invalid weight " << list[a].weight;
                return msg.str();
            }
            for (std::size_t b = a + 1; b < list.size(); ++b) {
                if (list[a].bone == list[b].bone) {
                    msg << "bone " << list[a].bone << " listed twice";
                    return msg.str();
                }
            }
            sum += list[a].weight;
        }
        if (std::abs(sum - 1.0) > kWeightSumTolerance) {
            msg.precision(17);
            msg << "weights sum to " << sum;
            return msg.str();
        }
    }
    return {};
}

void validate_weights(const WeightMap& weights, std::size_t bone_count) {
    if (auto v = weight_violation(weights, bone_count); !v.empty()) throw InvariantError(v);
}

void SkinningModel::validate() const {
    if (rest_pose.empty()) throw InvariantError("model has no vertices");
    if (weights.vertex_count() != rest_pose.size()) {
        throw ShapeError("weight map covers " + std::to_string(weights.vertex_count()) + " vertices, rest pose has " +
                         std::to_string(rest_pose.size()));
    }
    if (transforms.frame_count() == 0 || transforms.bone_count() == 0) {
        throw InvariantError("model has no frames or no bones");
    }
    if (!transforms.all_finite()) throw InvariantError("non-finite bone transform");
    if (!std::all_of(rest_pose.begin(), rest_pose.end(), finite)) {
        throw InvariantError("non-finite rest pose coordinate");
    }
    for (const auto& f : faces) {
        for (auto idx : f) {
            if (idx >= rest_pose.size()) throw IndexError("face vertex index out of range");
        }
    }
    validate_weights(weights, transforms.bone_count());
}

Vec3 lbs_vertex(const Vec3& rest, std::span<const Influence> weights, std::span<const Affine34> frame_transforms) {
    Vec3 out = Vec3::Zero();
    for (const auto& inf : weights) {
        if (inf.bone >= frame_transforms.size()) {
            throw IndexError("bone " + std::to_string(inf.bone) + " out of range (B = " +
                             std::to_string(frame_transforms.size()) + ")");
        }
        out += inf.weight * apply(frame_transforms[inf.bone], rest);
    }
    return out;
}

AnimSequence lbs_sequence(const SkinningModel& model) {
    model.validate();
    const std::size_t n = model.vertex_count();
    const std::size_t frames = model.frame_count();
    std::vector<Vec3> positions(n * frames);
    for (std::size_t p = 0; p < frames; ++p) {
        const auto ts = model.transforms.frame(p);
        for (std::size_t i = 0; i < n; ++i) {
            positions[p * n + i] = lbs_vertex(model.rest_pose[i], model.weights[i], ts);
        }
    }
    return AnimSequence(model.rest_pose, std::move(positions), frames, model.faces);
}

Trajectory trajectory(const AnimSequence& seq, std::size_t vertex_id) {
    if (vertex_id >= seq.vertex_count()) {
        throw IndexError("vertex " + std::to_string(vertex_id) + " out of range (N = " +
                         std::to_string(seq.vertex_count()) + ")");
    }
    Trajectory t;
    t.vertex_id = vertex_id;
    t.values.reserve(3 * seq.frame_count());
    for (std::size_t p = 0; p < seq.frame_count(); ++p) {
        const Vec3& v = seq.position(p, vertex_id);
        t.values.insert(t.values.end(), {v.x(), v.y(), v.z()});
    }
    return t;
}

AnimSequence from_trajectories(std::span<const Trajectory> trajectories, std::vector<Vec3> rest_pose,
                               std::vector<Face> faces) {
    const std::size_t n = trajectories.size();
    if (n == 0) throw InvariantError("no trajectories");
    const std::size_t len = trajectories.front().values.size();
    if (len == 0 || len % 3 != 0) throw ShapeError("trajectory length must be a positive multiple of 3");
    const std::size_t frames = len / 3;
    std::vector<Vec3> positions(n * frames);
    for (const auto& t : trajectories) {
        if (t.vertex_id >= n) throw IndexError("trajectory vertex id out of range");
        if (t.values.size() != len) throw ShapeError("trajectories have different lengths");
        for (std::size_t p = 0; p < frames; ++p) {
            positions[p * n + t.vertex_id] = Vec3(t.values[3 * p], t.values[3 * p + 1], t.values[3 * p + 2]);
        }
    }
    return AnimSequence(std::move(rest_pose), std::move(positions), frames, std::move(faces));
}

std::optional<Vec3> triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 n = (b - a).cross(c - a);
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) return std::nullopt;
    return n / len;
}

std::vector<std::optional<Vec3>> face_normals(const AnimSequence& seq, std::size_t frame) {
    if (frame >= seq.frame_count()) throw IndexError("frame " + std::to_string(frame) + " out of range");
    const auto pos = seq.frame(frame);
    std::vector<std::optional<Vec3>> normals;
    normals.reserve(seq.faces().size());
    for (const auto& f : seq.faces()) normals.push_back(triangle_normal(pos[f[0]], pos[f[1]], pos[f[2]]));
    return normals;
}

double bounding_box_diagonal(std::span<const Vec3> points) {
    if (points.empty()) return 0.0;
    Vec3 lo = points.front();
    Vec3 hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
}

SkinningModel SyntheticRig::model() const {
    const auto rest = sequence.rest_pose();
    const auto faces = sequence.faces();
    return SkinningModel{{rest.begin(), rest.end()}, weights, transforms, {faces.begin(), faces.end()}};
}

SyntheticRig make_synthetic_rig(std::size_t bones, std::size_t vertices_per_segment, std::size_t frames,
                                std::uint64_t seed) {
    if (bones == 0) throw InvariantError("synthetic rig needs at least one bone");
    if (frames < 2) throw InvariantError("synthetic rig needs at least two frames");

    constexpr std::size_t kRing = 8;
    constexpr double kRadius = 0.25;
    constexpr double kBlend = 0.2;
    const double two_pi = 2.0 * std::numbers::pi;

    const std::size_t rings_per_segment = std::max<std::size_t>(2, (vertices_per_segment + kRing - 1) / kRing);
    const std::size_t rings = bones * rings_per_segment;
    const std::size_t n = rings * kRing;

    std::vector<Vec3> rest(n);
    WeightMap weights;
    weights.vertices.resize(n);
    for (std::size_t g = 0; g < rings; ++g) {
        const std::size_t segment = g / rings_per_segment;
        const std::size_t r = g % rings_per_segment;
        const double x = static_cast<double>(segment) + (static_cast<double>(r) + 0.5) / rings_per_segment;

        // Blend toward the nearest interior joint, smoothstep over [joint - h, joint + h].
        std::vector<Influence> influence{{static_cast<std::uint32_t>(segment), 1.0}};
        const double nearest_joint = std::round(x);
        if (nearest_joint >= 1.0 && nearest_joint <= static_cast<double>(bones - 1) &&
            std::abs(x - nearest_joint) < kBlend) {
            const double t = (x - nearest_joint + kBlend) / (2.0 * kBlend);
            const double s = t * t * (3.0 - 2.0 * t);
            const auto child = static_cast<std::uint32_t>(nearest_joint);
            influence = {{child - 1, 1.0 - s}, {child, s}};
        }
        for (std::size_t k = 0; k < kRing; ++k) {
            const double phi = two_pi * static_cast<double>(k) / kRing;
            rest[g * kRing + k] = Vec3(x, kRadius * std::cos(phi), kRadius * std::sin(phi));
            weights.vertices[g * kRing + k] = influence;
        }
    }

    std::vector<Face> faces;
    for (std::size_t g = 0; g + 1 < rings; ++g) {
        for (std::size_t k = 0; k < kRing; ++k) {
            const auto a = static_cast<std::uint32_t>(g * kRing + k);
            const auto b = static_cast<std::uint32_t>(g * kRing + (k + 1) % kRing);
            const auto c = static_cast<std::uint32_t>((g + 1) * kRing + k);
            const auto d = static_cast<std::uint32_t>((g + 1) * kRing + (k + 1) % kRing);
            faces.push_back({a, b, d});
            faces.push_back({a, d, c});
        }
    }

    struct Joint {
        Vec3 axis;
        double amplitude;
        double cycles;
        double phase;
    };
    CounterRng rng(seed);
    std::vector<Joint> joints(bones);
    for (auto& j : joints) {
        j.axis = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0).normalized();
        j.amplitude = rng.uniform(0.3, 0.9);
        j.cycles = rng.uniform(0.5, 1.5);
        j.phase = rng.uniform(0.0, two_pi);
    }
    const double root_phase = rng.uniform(0.0, two_pi);

    BoneTransformSet transforms(frames, bones);
    for (std::size_t p = 0; p < frames; ++p) {
        const double time = static_cast<double>(p) / static_cast<double>(frames - 1);
        Eigen::Isometry3d parent = Eigen::Isometry3d::Identity();
        parent.translate(Vec3(0.3 * std::sin(two_pi * time + root_phase), 0.2 * std::cos(two_pi * time), 0.0));
        for (std::size_t j = 0; j < bones; ++j) {
            const auto& joint = joints[j];
            const double angle = joint.amplitude * std::sin(two_pi * joint.cycles * time + joint.phase);
            const Vec3 pivot(static_cast<double>(j), 0.0, 0.0);
            Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
            local.translate(pivot).rotate(Eigen::AngleAxisd(angle, joint.axis)).translate(-pivot);
            parent = parent * local;
            transforms.at(p, j) = parent.matrix().topRows<3>();
        }
    }

    SkinningModel model{rest, weights, transforms, faces};
    AnimSequence seq = lbs_sequence(model);
    return SyntheticRig{std::move(seq), std::move(weights), std::move(transforms)};
}

}  // namespace skinfit
