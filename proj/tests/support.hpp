#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <numeric>

#include "skinfit/anim.hpp"
#include "skinfit/fitting.hpp"
#include "skinfit/rng.hpp"

namespace testing {

using skinfit::AnimSequence;
using skinfit::Vec3;

inline Vec3 random_vec(skinfit::CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    const double x = rng.uniform(lo, hi);
    const double y = rng.uniform(lo, hi);
    const double z = rng.uniform(lo, hi);
    return {x, y, z};
}

// Random positions, rest pose = frame 0, faces over consecutive vertex triples.
inline AnimSequence random_sequence(std::size_t n, std::size_t p, std::uint64_t seed) {
    skinfit::CounterRng rng(seed);
    std::vector<Vec3> pos(n * p);
    for (auto& v : pos) v = random_vec(rng);
    std::vector<skinfit::Face> faces;
    for (std::uint32_t i = 0; i + 2 < n; ++i) faces.push_back({i, i + 1, i + 2});
    std::vector<Vec3> rest(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n));
    return AnimSequence(std::move(rest), std::move(pos), p, std::move(faces));
}

inline AnimSequence perturbed(const AnimSequence& seq, double scale, std::uint64_t seed) {
    skinfit::CounterRng rng(seed);
    std::vector<Vec3> pos(seq.positions().begin(), seq.positions().end());
    for (auto& v : pos) v += scale * random_vec(rng);
    return AnimSequence(std::vector<Vec3>(seq.rest_pose().begin(), seq.rest_pose().end()), std::move(pos),
                        seq.frame_count(), std::vector<skinfit::Face>(seq.faces().begin(), seq.faces().end()));
}

inline AnimSequence single_vertex(std::vector<Vec3> frames) {
    const std::size_t p = frames.size();
    std::vector<Vec3> rest{frames.front()};
    return AnimSequence(std::move(rest), std::move(frames), p, {});
}

inline skinfit::Affine34 translation(double x, double y, double z) {
    skinfit::Affine34 t = skinfit::Affine34::Identity();
    t.col(3) = Vec3(x, y, z);
    return t;
}

inline double relative_difference(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline skinfit::WeightMap support_of(const skinfit::WeightMap& w) {
    std::vector<std::vector<std::uint32_t>> support;
    for (const auto& list : w.vertices) {
        support.emplace_back();
        for (const auto& inf : list) support.back().push_back(inf.bone);
    }
    return skinfit::uniform_weights(support);
}

// Random rest pose, random weights on up to `per_vertex` bones, random
// affine transforms, plus optional noise on the positions.
inline skinfit::SyntheticRig random_instance(std::size_t n, std::size_t p, std::size_t b, std::size_t per_vertex,
                                             double noise, std::uint64_t seed) {
    skinfit::CounterRng rng(seed);
    skinfit::SkinningModel m;
    for (std::size_t i = 0; i < n; ++i) m.rest_pose.push_back(random_vec(rng));
    m.weights.vertices.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = 1 + rng.below(std::min(per_vertex, b));
        std::vector<std::uint32_t> bones(b);
        std::iota(bones.begin(), bones.end(), 0u);
        for (std::size_t k = b; k > 1; --k) std::swap(bones[k - 1], bones[rng.below(k)]);
        double sum = 0;
        for (std::size_t k = 0; k < count; ++k) {
            const double w = rng.uniform(0.1, 1.0);
            m.weights.vertices[i].push_back({bones[k], w});
            sum += w;
        }
        for (auto& inf : m.weights.vertices[i]) inf.weight /= sum;
    }
    // Every bone gets at least one rigidly bound vertex.
    for (std::uint32_t j = 0; j < b && j < n; ++j) m.weights.vertices[j] = {{j, 1.0}};
    m.transforms = skinfit::BoneTransformSet(p, b);
    for (std::size_t f = 0; f < p; ++f) {
        for (std::size_t j = 0; j < b; ++j) {
            skinfit::Affine34 t = skinfit::Affine34::Identity();
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 4; ++c) t(r, c) += 0.4 * rng.uniform(-1, 1);
            }
            m.transforms.at(f, j) = t;
        }
    }
    const AnimSequence clean = skinfit::lbs_sequence(m);
    return {noise > 0 ? perturbed(clean, noise, seed + 1) : clean, m.weights, m.transforms};
}

}  // namespace testing
