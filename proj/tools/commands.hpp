#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "skinfit/anim.hpp"
#include "skinfit/cnn.hpp"

namespace skinfit::cli {

/// Parses `args` (without the program name) and runs one subcommand:
/// synth, train, decompose, reconstruct, evaluate, info.
///
/// Returns 0 on success, 1 on error, 2 when --strict is set and warnings
/// were raised. Machine-readable results go to `out`; warnings and errors
/// go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Ground-truth side files written next to synthesized animations.

/// "LABELS <N> <B>" then N rows of B space-separated 0/1 values.
void save_labels(const std::filesystem::path& path, const LabelSet& labels);
LabelSet load_labels(const std::filesystem::path& path);

/// "WEIGHTS <N> <B>" then per vertex: count followed by (bone weight) pairs.
void save_weights(const std::filesystem::path& path, const WeightMap& weights, std::size_t bone_count);

}  // namespace skinfit::cli
