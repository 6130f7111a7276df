#include "skinfit/initializers.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "skinfit/error.hpp"
#include "skinfit/rng.hpp"

namespace skinfit {

namespace {

constexpr std::size_t kMaxLloydIterations = 100;
constexpr double kCentroidTolerance = 1e-9;

Eigen::MatrixXd trajectory_matrix(const AnimSequence& seq) {
    const auto n = static_cast<Eigen::Index>(seq.vertex_count());
    const auto dims = static_cast<Eigen::Index>(3 * seq.frame_count());
    Eigen::MatrixXd x(dims, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < seq.frame_count(); ++p) {
            x.col(i).segment<3>(static_cast<Eigen::Index>(3 * p)) = seq.position(p, static_cast<std::size_t>(i));
        }
    }
    return x;
}

std::size_t nearest(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& point, double* dist2) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
        const double d = (centroids.col(c) - point).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(c);
        }
    }
    if (dist2 != nullptr) *dist2 = best_d;
    return best;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, std::size_t k, CounterRng& rng) {
    const auto n = static_cast<std::size_t>(x.cols());
    Eigen::MatrixXd centroids(x.rows(), static_cast<Eigen::Index>(k));
    centroids.col(0) = x.col(static_cast<Eigen::Index>(rng.below(n)));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            d2[i] = std::min(d2[i], (x.col(col) - centroids.col(static_cast<Eigen::Index>(c - 1))).squaredNorm());
            total += d2[i];
        }
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centroids.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(pick));
    }
    return centroids;
}

}  // namespace

LabelSet cluster_trajectories(const AnimSequence& seq, std::size_t k, std::uint64_t seed) {
    const std::size_t n = seq.vertex_count();
    if (k < 1 || k > n) {
        throw InvariantError("cluster count " + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
    }
    const Eigen::MatrixXd x = trajectory_matrix(seq);
    CounterRng rng(seed);
    Eigen::MatrixXd centroids = seed_plus_plus(x, k, rng);

    std::vector<std::size_t> assignment(n, 0);
    std::vector<double> dist2(n, 0.0);
    auto assign_all = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            assignment[i] = nearest(centroids, x.col(static_cast<Eigen::Index>(i)), &dist2[i]);
        }
    };

    for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
        assign_all();
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[assignment[i]];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            // Reseed from the point worst served by its current centroid.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assignment[i]] > 1 && dist2[i] > 0.0 && (far == n || dist2[i] > dist2[far])) far = i;
            }
            if (far == n) continue;
            --counts[assignment[far]];
            counts[c] = 1;
            assignment[far] = c;
            dist2[far] = 0.0;
            centroids.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(far));
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < n; ++i) {
            sums.col(static_cast<Eigen::Index>(assignment[i])) += x.col(static_cast<Eigen::Index>(i));
        }
        double movement = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            const auto col = static_cast<Eigen::Index>(c);
            const Eigen::VectorXd updated = sums.col(col) / static_cast<double>(counts[c]);
            movement = std::max(movement, (updated - centroids.col(col)).norm());
            centroids.col(col) = updated;
        }
        if (movement < kCentroidTolerance) break;
    }

    LabelSet labels;
    labels.label_count = k;
    labels.bits.assign(n * k, 0);
    for (std::size_t i = 0; i < n; ++i) labels.row(i)[assignment[i]] = 1;
    return labels;
}

ProbabilityMatrix predict_probabilities(const CnnModel& model, const AnimSequence& seq) {
    ProbabilityMatrix out;
    out.reserve(seq.vertex_count());
    for (std::size_t i = 0; i < seq.vertex_count(); ++i) out.push_back(cnn_forward(model, trajectory(seq, i).values));
    return out;
}

ProbabilityMatrix labels_to_probabilities(const LabelSet& labels) {
    ProbabilityMatrix out(labels.vertex_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto row = labels.row(i);
        out[i].assign(row.begin(), row.end());
    }
    return out;
}

ExtractedWeights extract_weights(const ProbabilityMatrix& probabilities, double epsilon) {
    if (probabilities.empty()) throw InvariantError("no probability rows");
    const std::size_t labels = probabilities.front().size();

    std::vector<std::vector<std::pair<std::uint32_t, double>>> kept(probabilities.size());
    std::vector<bool> active(labels, false);
    std::vector<std::uint32_t> order(labels);
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        const auto& row = probabilities[i];
        if (row.size() != labels) throw ShapeError("probability rows differ in length");
        for (double p : row) {
            if (!(p >= 0.0 && p <= 1.0)) throw InvariantError("probability outside [0, 1] at vertex " + std::to_string(i));
        }
        std::iota(order.begin(), order.end(), 0U);
        const std::size_t top = std::min(kMaxInfluences, labels);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                          [&](std::uint32_t a, std::uint32_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
        const double peak = row[order.front()];
        if (!(peak > 0.0)) throw DegenerateInputError("all probabilities zero at vertex " + std::to_string(i));

        double sum = 0.0;
        for (std::size_t r = 0; r < top; ++r) {
            const double p = row[order[r]];
            if (p <= 0.0 || p < epsilon * peak) continue;
            kept[i].emplace_back(order[r], p);
            sum += p;
        }
        std::sort(kept[i].begin(), kept[i].end());
        for (auto& [label, p] : kept[i]) {
            p /= sum;
            active[label] = true;
        }
    }

    ExtractedWeights out;
    std::vector<std::uint32_t> remap(labels, 0);
    for (std::uint32_t l = 0; l < labels; ++l) {
        if (!active[l]) continue;
        remap[l] = static_cast<std::uint32_t>(out.active_labels.size());
        out.active_labels.push_back(l);
    }
    out.bone_count = out.active_labels.size();
    out.weights.vertices.resize(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (const auto& [label, w] : kept[i]) out.weights.vertices[i].push_back({remap[label], w});
    }
    return out;
}

}  // namespace skinfit
