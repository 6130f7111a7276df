#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "skinfit/anim.hpp"
#include "skinfit/error.hpp"

namespace skinfit {

/// Approximation quality of one (original, approximation) pair.
struct ErrorReport {
    double disper = 0.0;        ///< distortion percentage
    double erms = 0.0;          ///< RMS coordinate error, x100
    double max_avg_dist = 0.0;  ///< mean over frames of the worst vertex distance
    double norm_distort = 0.0;  ///< radians, in [0, pi/2]
    double crp = 0.0;           ///< compression rate percent
};

/// 100 * ||A_orig - A_approx||_F / ||A_orig - A_avg||_F where A_avg repeats each
/// vertex's time-averaged position in every frame. Throws DegenerateInputError
/// when the original does not move.
double dis_per(const AnimSequence& orig, const AnimSequence& approx);

/// 100 * ||A_orig - A_approx||_F / sqrt(3NP).
double erms(const AnimSequence& orig, const AnimSequence& approx);

/// (1/P) * sum over frames of max over vertices of ||v_orig - v_approx||.
double max_avg_dist(const AnimSequence& orig, const AnimSequence& approx);

/// asin of the mean norm of (n_orig x n_approx) over all faces and frames.
/// Both sequences must share faces; degenerate faces throw DegenerateInputError.
double norm_distort(const AnimSequence& orig, const AnimSequence& approx);

/// Percentage saved by storing rest pose (3N), six weights per vertex (6N)
/// and 12 values per bone per frame instead of 3NP raw coordinates. A
/// negative result means the skinned form is larger; it is returned as-is and
/// flagged through `diag`.
double compression_rate(std::size_t n, std::size_t p, std::size_t b, Diagnostics* diag = nullptr);

/// Euclidean distance per vertex at one frame.
std::vector<double> per_vertex_error(const AnimSequence& orig, const AnimSequence& approx, std::size_t frame);

/// All four metrics plus compression rate for `bones` bones. With bones == 0
/// the approximation is treated as uncompressed and crp is 0.
ErrorReport evaluate(const AnimSequence& orig, const AnimSequence& approx, std::size_t bones,
                     Diagnostics* diag = nullptr);

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace skinfit
