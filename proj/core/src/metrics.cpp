#include "skinfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

namespace skinfit {

namespace {

void require_same_shape(const AnimSequence& a, const AnimSequence& b) {
    if (a.vertex_count() != b.vertex_count() || a.frame_count() != b.frame_count()) {
        std::ostringstream msg;
        msg << "shape mismatch: original has N=" << a.vertex_count() << " P=" << a.frame_count()
            << ", approximation has N=" << b.vertex_count() << " P=" << b.frame_count();
        throw ShapeError(msg.str());
    }
}

double squared_frobenius_difference(const AnimSequence& a, const AnimSequence& b) {
    CompensatedSum sum;
    const auto pa = a.positions();
    const auto pb = b.positions();
    for (std::size_t k = 0; k < pa.size(); ++k) sum.add((pa[k] - pb[k]).squaredNorm());
    return sum.value();
}

}  // namespace

double dis_per(const AnimSequence& orig, const AnimSequence& approx) {
    require_same_shape(orig, approx);
    const std::size_t n = orig.vertex_count();
    const std::size_t frames = orig.frame_count();

    std::vector<Vec3> mean(n, Vec3::Zero());
    for (std::size_t i = 0; i < n; ++i) {
        CompensatedSum sx, sy, sz;
        for (std::size_t p = 0; p < frames; ++p) {
            const Vec3& v = orig.position(p, i);
            sx.add(v.x());
            sy.add(v.y());
            sz.add(v.z());
        }
        mean[i] = Vec3(sx.value(), sy.value(), sz.value()) / static_cast<double>(frames);
    }
    CompensatedSum spread;
    for (std::size_t p = 0; p < frames; ++p) {
        for (std::size_t i = 0; i < n; ++i) spread.add((orig.position(p, i) - mean[i]).squaredNorm());
    }
    if (!(spread.value() > 0.0)) {
        throw DegenerateInputError("DisPer undefined: original animation is static");
    }
    return 100.0 * std::sqrt(squared_frobenius_difference(orig, approx)) / std::sqrt(spread.value());
}

double erms(const AnimSequence& orig, const AnimSequence& approx) {
    require_same_shape(orig, approx);
    const double count = 3.0 * static_cast<double>(orig.vertex_count()) * static_cast<double>(orig.frame_count());
    return 100.0 * std::sqrt(squared_frobenius_difference(orig, approx)) / std::sqrt(count);
}

double max_avg_dist(const AnimSequence& orig, const AnimSequence& approx) {
    require_same_shape(orig, approx);
    CompensatedSum sum;
    for (std::size_t p = 0; p < orig.frame_count(); ++p) {
        const auto errors = per_vertex_error(orig, approx, p);
        sum.add(*std::max_element(errors.begin(), errors.end()));
    }
    return sum.value() / static_cast<double>(orig.frame_count());
}

double norm_distort(const AnimSequence& orig, const AnimSequence& approx) {
    require_same_shape(orig, approx);
    if (!std::equal(orig.faces().begin(), orig.faces().end(), approx.faces().begin(), approx.faces().end())) {
        throw ShapeError("normal distortion needs identical face lists");
    }
    const std::size_t num_faces = orig.faces().size();
    if (num_faces == 0) throw DegenerateInputError("normal distortion needs at least one face");

    CompensatedSum sum;
    for (std::size_t p = 0; p < orig.frame_count(); ++p) {
        const auto a = face_normals(orig, p);
        const auto b = face_normals(approx, p);
        for (std::size_t j = 0; j < num_faces; ++j) {
            if (!a[j] || !b[j]) {
                std::ostringstream msg;
                msg << "degenerate face " << j << " at frame " << p << " in "
                    << (a[j] ? "approximation" : "original");
                throw DegenerateInputError(msg.str());
            }
            sum.add(a[j]->cross(*b[j]).norm());
        }
    }
    const double mean = sum.value() / (static_cast<double>(num_faces) * static_cast<double>(orig.frame_count()));
    if (mean > 1.0 + 1e-12) throw InvariantError("mean normal cross norm exceeds 1");
    return std::asin(std::clamp(mean, 0.0, 1.0));
}

double compression_rate(std::size_t n, std::size_t p, std::size_t b, Diagnostics* diag) {
    if (n == 0 || p == 0 || b == 0) throw InvariantError("compression rate needs positive N, P and B");
    const double nn = static_cast<double>(n);
    const double pp = static_cast<double>(p);
    const double bb = static_cast<double>(b);
    const double compressed = 3.0 * nn + 6.0 * nn + 12.0 * bb * pp;
    const double raw = 3.0 * nn * pp;
    const double rate = 100.0 * (1.0 - compressed / raw);
    if (rate < 0.0) {
        std::ostringstream msg;
        msg << "skinned representation (" << compressed << " values) is larger than raw (" << raw << ")";
        warn(diag, msg.str());
    }
    return rate;
}

std::vector<double> per_vertex_error(const AnimSequence& orig, const AnimSequence& approx, std::size_t frame) {
    if (orig.vertex_count() != approx.vertex_count()) {
        throw ShapeError("per-vertex error: N=" + std::to_string(orig.vertex_count()) + " vs N=" +
                         std::to_string(approx.vertex_count()));
    }
    if (frame >= orig.frame_count() || frame >= approx.frame_count()) {
        throw IndexError("frame " + std::to_string(frame) + " out of range");
    }
    const auto a = orig.frame(frame);
    const auto b = approx.frame(frame);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - b[i]).norm();
    return out;
}

ErrorReport evaluate(const AnimSequence& orig, const AnimSequence& approx, std::size_t bones, Diagnostics* diag) {
    ErrorReport r;
    r.disper = dis_per(orig, approx);
    r.erms = erms(orig, approx);
    r.max_avg_dist = max_avg_dist(orig, approx);
    r.norm_distort = norm_distort(orig, approx);
    r.crp = bones == 0 ? 0.0 : compression_rate(orig.vertex_count(), orig.frame_count(), bones, diag);
    return r;
}

}  // namespace skinfit
