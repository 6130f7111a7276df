#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skinfit/anim.hpp"
#include "skinfit/error.hpp"

namespace skinfit {

// Little-endian binary container for a SkinningModel:
//
//   header     "SKND" | u16 version | u16 bone count B | u32 N | u32 P   (16 bytes)
//   rest pose  N x 3 f32
//   weights    N x 6 slots of (u16 bone, f32 weight); unused slots are (0xFFFF, 0)
//   transforms P x B x 12 f32, each 3x4 block row-major
//   faces      F x 3 u32; F is implied by the remaining length
//
// Total size is 16 + 12N + 36N + 48BP + 12F bytes.

inline constexpr std::uint16_t kCodecVersion = 1;
inline constexpr std::uint16_t kUnusedSlot = 0xFFFF;
inline constexpr std::size_t kHeaderBytes = 16;

class CodecError : public FormatError {
public:
    enum class Kind { Truncated, BadMagic, BadVersion, Invariant, Unencodable };

    CodecError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct CompressedHeader {
    std::uint16_t version = 0;
    std::size_t bone_count = 0;
    std::size_t vertex_count = 0;
    std::size_t frame_count = 0;
    std::size_t face_count = 0;
};

/// Deterministic serialization. Weights are quantized to f32 in a canonical
/// form so that encode(decode(encode(m))) == encode(m). Throws CodecError
/// (Unencodable) when B > 65534 or the model has more than six influences.
std::vector<std::uint8_t> encode(const SkinningModel& model);

/// Rebuilds a model; weights are restored to sum exactly to one. Throws
/// CodecError without returning a partial model on any defect.
SkinningModel decode(std::span<const std::uint8_t> bytes);

/// Parses and checks only the header (and the implied face count).
CompressedHeader decode_header(std::span<const std::uint8_t> bytes);

bool has_codec_magic(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

struct SizeReport {
    std::size_t raw_values = 0;         ///< 3NP
    std::size_t compressed_values = 0;  ///< 9N + 12BP
    double crp = 0.0;                   ///< compression_rate(N, P, B)
};

SizeReport report_sizes(const SkinningModel& model, const AnimSequence& seq);

}  // namespace skinfit
