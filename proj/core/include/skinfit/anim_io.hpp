#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "skinfit/anim.hpp"

namespace skinfit {

// Line-oriented text interchange:
//
//   ANIM <N> <P> <num_faces>
//   v x y z          (N lines, rest pose)
//   f i j k          (num_faces lines, 0-based)
//   frame <p>        (P blocks, each followed by N lines "x y z")
//
// Reals are written with 17 significant digits so doubles round-trip exactly.

void write_anim(std::ostream& out, const AnimSequence& seq);
AnimSequence read_anim(std::istream& in);

AnimSequence load_anim(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void save_anim(const std::filesystem::path& path, const AnimSequence& seq);

/// Writes `content` via temp file + rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace skinfit
