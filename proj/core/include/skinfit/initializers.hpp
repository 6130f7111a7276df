#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "skinfit/anim.hpp"
#include "skinfit/cnn.hpp"

namespace skinfit {

/// Per-vertex bone probabilities, one row per vertex.
using ProbabilityMatrix = std::vector<std::vector<double>>;

/// k-means over the 3F-dimensional vertex trajectories with k-means++
/// seeding. Runs at most 100 Lloyd iterations, stopping early once no
/// centroid moves by 1e-9 or more. A cluster that empties is reseeded with
/// the point farthest from its centroid. Returns one-hot labels (cluster =
/// bone). Throws InvariantError unless 1 <= k <= N.
LabelSet cluster_trajectories(const AnimSequence& seq, std::size_t k, std::uint64_t seed);

/// Runs the classifier on every vertex trajectory.
ProbabilityMatrix predict_probabilities(const CnnModel& model, const AnimSequence& seq);

/// Labels reinterpreted as 0/1 probabilities.
ProbabilityMatrix labels_to_probabilities(const LabelSet& labels);

struct ExtractedWeights {
    WeightMap weights;
    std::size_t bone_count = 0;
    /// active_labels[b] is the probability column that became bone b.
    std::vector<std::uint32_t> active_labels;
};

/// Keeps each vertex's six most probable labels (ties to the lower index),
/// drops entries below epsilon * (row maximum) and exact zeros, then
/// renormalizes to one. Labels kept by any vertex become bones, renumbered
/// densely in label order. Throws DegenerateInputError for an all-zero row.
ExtractedWeights extract_weights(const ProbabilityMatrix& probabilities, double epsilon);

}  // namespace skinfit
