#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace skinfit {

using Vec3 = Eigen::Vector3d;
/// Affine bone transform [R | t]; the 3x3 block is not constrained to a rotation.
using Affine34 = Eigen::Matrix<double, 3, 4>;
using Face = std::array<std::uint32_t, 3>;

/// Per-frame vertex positions of a mesh plus its connectivity and rest pose.
/// Positions are stored frame-major: frame p occupies [p*N, (p+1)*N).
class AnimSequence {
public:
    AnimSequence() = default;
    AnimSequence(std::vector<Vec3> rest_pose, std::vector<Vec3> positions, std::size_t frame_count,
                 std::vector<Face> faces);

    std::size_t vertex_count() const { return rest_pose_.size(); }
    std::size_t frame_count() const { return frame_count_; }

    const Vec3& position(std::size_t frame, std::size_t vertex) const {
        return positions_[frame * rest_pose_.size() + vertex];
    }
    std::span<const Vec3> frame(std::size_t p) const {
        return {positions_.data() + p * rest_pose_.size(), rest_pose_.size()};
    }
    std::span<const Vec3> positions() const { return positions_; }
    std::span<const Vec3> rest_pose() const { return rest_pose_; }
    std::span<const Face> faces() const { return faces_; }

    /// Same positions and faces with the rest pose replaced by frame `p`.
    AnimSequence with_rest_from_frame(std::size_t p) const;

private:
    std::vector<Vec3> rest_pose_;
    std::vector<Vec3> positions_;
    std::size_t frame_count_ = 0;
    std::vector<Face> faces_;
};

/// One vertex's positions over all frames, flattened x0,y0,z0,x1,...
struct Trajectory {
    std::size_t vertex_id = 0;
    std::vector<double> values;
};

/// P x B affine transforms, frame-major.
class BoneTransformSet {
public:
    BoneTransformSet() = default;
    BoneTransformSet(std::size_t frame_count, std::size_t bone_count);

    static BoneTransformSet identity(std::size_t frame_count, std::size_t bone_count);

    std::size_t frame_count() const { return frame_count_; }
    std::size_t bone_count() const { return bone_count_; }

    Affine34& at(std::size_t frame, std::size_t bone) { return transforms_[frame * bone_count_ + bone]; }
    const Affine34& at(std::size_t frame, std::size_t bone) const {
        return transforms_[frame * bone_count_ + bone];
    }
    std::span<Affine34> frame(std::size_t p) { return {transforms_.data() + p * bone_count_, bone_count_}; }
    std::span<const Affine34> frame(std::size_t p) const {
        return {transforms_.data() + p * bone_count_, bone_count_};
    }

    bool all_finite() const;

private:
    std::size_t frame_count_ = 0;
    std::size_t bone_count_ = 0;
    std::vector<Affine34> transforms_;
};

struct Influence {
    std::uint32_t bone = 0;
    double weight = 0.0;

    friend bool operator==(const Influence&, const Influence&) = default;
};

inline constexpr std::size_t kMaxInfluences = 6;
inline constexpr double kWeightSumTolerance = 1e-9;

/// Sparse convex skinning weights, one influence list per vertex.
struct WeightMap {
    std::vector<std::vector<Influence>> vertices;

    std::size_t vertex_count() const { return vertices.size(); }
    std::span<const Influence> operator[](std::size_t i) const { return vertices[i]; }
};

/// Empty string when `weights` satisfies every invariant for `bone_count`
/// bones (at most six unique influences, non-negative, summing to one),
/// otherwise a description of the first violation.
std::string weight_violation(const WeightMap& weights, std::size_t bone_count);
/// Throws InvariantError on the first violation.
void validate_weights(const WeightMap& weights, std::size_t bone_count);

struct SkinningModel {
    std::vector<Vec3> rest_pose;
    WeightMap weights;
    BoneTransformSet transforms;
    std::vector<Face> faces;

    std::size_t vertex_count() const { return rest_pose.size(); }
    std::size_t frame_count() const { return transforms.frame_count(); }
    std::size_t bone_count() const { return transforms.bone_count(); }

    void validate() const;
};

inline Vec3 apply(const Affine34& t, const Vec3& v) { return t.leftCols<3>() * v + t.col(3); }

/// Linear blend skinning of one vertex: sum_j w_j * T_j * [rest; 1].
/// Throws IndexError when an influence refers to a bone outside `frame_transforms`.
Vec3 lbs_vertex(const Vec3& rest, std::span<const Influence> weights, std::span<const Affine34> frame_transforms);

/// Evaluates every vertex in every frame. Faces and rest pose are copied through.
AnimSequence lbs_sequence(const SkinningModel& model);

Trajectory trajectory(const AnimSequence& seq, std::size_t vertex_id);

/// Inverse of trajectory(): rebuilds positions from one trajectory per vertex
/// (ordered by vertex_id).
AnimSequence from_trajectories(std::span<const Trajectory> trajectories, std::vector<Vec3> rest_pose,
                               std::vector<Face> faces);

/// Unit normal of the counterclockwise triangle (a, b, c); nullopt when the
/// triangle has zero area.
std::optional<Vec3> triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c);

/// Per-face unit normals at one frame. Degenerate faces map to nullopt.
std::vector<std::optional<Vec3>> face_normals(const AnimSequence& seq, std::size_t frame);

/// Diagonal length of the axis-aligned bounding box of `points`.
double bounding_box_diagonal(std::span<const Vec3> points);

struct SyntheticRig {
    AnimSequence sequence;
    WeightMap weights;
    BoneTransformSet transforms;

    SkinningModel model() const;
};

/// Articulated chain of `bones` segments laid along +x, skinned as a tube.
///
/// Each segment holds `vertices_per_segment` vertices rounded up to whole
/// rings of eight (at least two rings). Vertices within 0.2 of a joint blend
/// smoothly between the two adjacent bones; all others are rigidly bound.
/// Every joint rotates sinusoidally about a seeded axis and the root
/// translates, so transforms are rigid and smooth in time. Positions are
/// produced by lbs_sequence, making the returned triple exactly consistent.
SyntheticRig make_synthetic_rig(std::size_t bones, std::size_t vertices_per_segment, std::size_t frames,
                                std::uint64_t seed);

}  // namespace skinfit
