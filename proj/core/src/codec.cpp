#include "skinfit/codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "skinfit/metrics.hpp"

namespace skinfit {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'K', 'N', 'D'};
constexpr std::size_t kSlotBytes = 6;
constexpr std::size_t kVertexBytes = 12 + kMaxInfluences * kSlotBytes;

class Writer {
public:
    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<std::uint8_t>(v));
        bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint16_t u16() {
        need(2);
        const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw CodecError(CodecError::Kind::Truncated, "compressed stream truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

// Index of the largest value, lowest index on ties.
std::size_t largest(std::span<const float> q) {
    std::size_t m = 0;
    for (std::size_t k = 1; k < q.size(); ++k) {
        if (q[k] > q[m]) m = k;
    }
    return m;
}

double sum_except(std::span<const float> q, std::size_t skip) {
    double s = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (k != skip) s += static_cast<double>(q[k]);
    }
    return s;
}

// Canonical f32 weights: the largest slot holds float(1 - sum of the others).
// Decoding sets that slot to 1 - sum(others) in double, which quantizes back
// to the same float, so re-encoding a decoded model reproduces the bytes.
std::vector<float> quantize_weights(std::span<const Influence> influences) {
    std::vector<float> q(influences.size());
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = static_cast<float>(influences[k].weight);
    if (q.empty()) return q;
    for (int pass = 0; pass < 4; ++pass) {
        const std::size_t m = largest(q);
        const float fixed = static_cast<float>(1.0 - sum_except(q, m));
        if (fixed == q[m]) break;
        q[m] = fixed;
    }
    return q;
}

}  // namespace

std::vector<std::uint8_t> encode(const SkinningModel& model) {
    model.validate();
    const std::size_t n = model.vertex_count();
    const std::size_t p = model.frame_count();
    const std::size_t b = model.bone_count();
    if (b > 65534) throw CodecError(CodecError::Kind::Unencodable, "bone count exceeds 65534");
    if (n > UINT32_MAX || p > UINT32_MAX) throw CodecError(CodecError::Kind::Unencodable, "N or P exceeds 32 bits");

    Writer w;
    w.raw(kMagic);
    w.u16(kCodecVersion);
    w.u16(static_cast<std::uint16_t>(b));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(p));
    for (const auto& v : model.rest_pose) {
        w.f32(static_cast<float>(v.x()));
        w.f32(static_cast<float>(v.y()));
        w.f32(static_cast<float>(v.z()));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto influences = model.weights[i];
        const auto q = quantize_weights(influences);
        for (std::size_t s = 0; s < kMaxInfluences; ++s) {
            if (s < influences.size()) {
                w.u16(static_cast<std::uint16_t>(influences[s].bone));
                w.f32(q[s]);
            } else {
                w.u16(kUnusedSlot);
                w.f32(0.0f);
            }
        }
    }
    for (std::size_t f = 0; f < p; ++f) {
        for (const auto& t : model.transforms.frame(f)) {
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 4; ++c) w.f32(static_cast<float>(t(r, c)));
            }
        }
    }
    for (const auto& face : model.faces) {
        for (auto idx : face) w.u32(idx);
    }
    return w.take();
}

bool has_codec_magic(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= kMagic.size() && std::equal(kMagic.begin(), kMagic.end(), bytes.begin());
}

CompressedHeader decode_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) throw CodecError(CodecError::Kind::Truncated, "compressed stream truncated");
    if (!has_codec_magic(bytes)) throw CodecError(CodecError::Kind::BadMagic, "bad magic (expected SKND)");
    Reader r(bytes.subspan(kMagic.size()));
    CompressedHeader h;
    h.version = r.u16();
    if (h.version != kCodecVersion) {
        throw CodecError(CodecError::Kind::BadVersion, "unsupported container version " + std::to_string(h.version));
    }
    h.bone_count = r.u16();
    h.vertex_count = r.u32();
    h.frame_count = r.u32();
    if (h.bone_count == 0 || h.vertex_count == 0 || h.frame_count == 0) {
        throw CodecError(CodecError::Kind::Invariant, "header has zero N, P or B");
    }
    const std::size_t fixed = kHeaderBytes + kVertexBytes * h.vertex_count + 48 * h.bone_count * h.frame_count;
    if (bytes.size() < fixed || (bytes.size() - fixed) % 12 != 0) {
        throw CodecError(CodecError::Kind::Truncated, "compressed stream truncated");
    }
    h.face_count = (bytes.size() - fixed) / 12;
    return h;
}

SkinningModel decode(std::span<const std::uint8_t> bytes) {
    const CompressedHeader h = decode_header(bytes);
    Reader r(bytes.subspan(kHeaderBytes));

    SkinningModel model;
    model.rest_pose.resize(h.vertex_count);
    for (auto& v : model.rest_pose) {
        const float x = r.f32();
        const float y = r.f32();
        const float z = r.f32();
        v = Vec3(x, y, z);
    }

    model.weights.vertices.resize(h.vertex_count);
    std::vector<float> q;
    for (std::size_t i = 0; i < h.vertex_count; ++i) {
        auto& list = model.weights.vertices[i];
        q.clear();
        for (std::size_t s = 0; s < kMaxInfluences; ++s) {
            const std::uint16_t bone = r.u16();
            const float weight = r.f32();
            if (bone == kUnusedSlot) continue;
            if (!(weight >= 0.0f) || !std::isfinite(weight)) {
                throw CodecError(CodecError::Kind::Invariant, "invalid weight at vertex " + std::to_string(i));
            }
            list.push_back({bone, weight});
            q.push_back(weight);
        }
        if (list.empty()) throw CodecError(CodecError::Kind::Invariant, "vertex " + std::to_string(i) + " has no weights");
        const std::size_t m = largest(q);
        list[m].weight = 1.0 - sum_except(q, m);
        if (!(list[m].weight >= 0.0)) {
            throw CodecError(CodecError::Kind::Invariant, "weights exceed one at vertex " + std::to_string(i));
        }
    }

    model.transforms = BoneTransformSet(h.frame_count, h.bone_count);
    for (std::size_t f = 0; f < h.frame_count; ++f) {
        for (auto& t : model.transforms.frame(f)) {
            for (int row = 0; row < 3; ++row) {
                for (int c = 0; c < 4; ++c) t(row, c) = r.f32();
            }
        }
    }
    model.faces.resize(h.face_count);
    for (auto& face : model.faces) {
        for (auto& idx : face) idx = r.u32();
    }

    try {
        model.validate();
    } catch (const Error& e) {
        throw CodecError(CodecError::Kind::Invariant, std::string("decoded model invalid: ") + e.what());
    }
    return model;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SizeReport report_sizes(const SkinningModel& model, const AnimSequence& seq) {
    if (model.vertex_count() != seq.vertex_count() || model.frame_count() != seq.frame_count()) {
        throw ShapeError("model and sequence disagree on N or P");
    }
    const std::size_t n = seq.vertex_count();
    const std::size_t p = seq.frame_count();
    const std::size_t b = model.bone_count();
    return {3 * n * p, 9 * n + 12 * b * p, compression_rate(n, p, b)};
}

}  // namespace skinfit
