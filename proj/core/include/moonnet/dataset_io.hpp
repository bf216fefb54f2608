#pragma once

// Annotation and image file formats.
//
// Annotation files are plain text, one object per line. Two line formats are
// accepted and may be mixed within a file:
//
//   DOTA:    x1 y1 x2 y2 x3 y3 x4 y4 <class-name> <difficult>
//            The polygon is replaced by its enclosing axis-aligned box.
//            <class-name> must be one of dota_class_names(); <difficult> is 0/1.
//   simple:  x1 y1 x2 y2 <class-id> [score]
//
// Blank lines, lines starting with '#', and DOTA header lines beginning with
// "imagesource:" or "gsd:" are ignored. Fields are separated by whitespace.
// See docs/formats.md for the full grammar.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moonnet/augment.hpp"

namespace moonnet {

/// DOTA v2.0 category names; a name's index is its class id.
std::span<const std::string_view> dota_class_names();
int dota_class_id(std::string_view name);

std::vector<BBox> parse_annotations(std::string_view text, std::string_view source = "<text>");
std::vector<BBox> read_annotation_file(const std::filesystem::path& path);
/// Every *.txt file in `dir`, keyed by file stem.
std::map<std::string, std::vector<BBox>> read_annotation_dir(const std::filesystem::path& dir);

/// Writes the simple format; the score column is present iff the box has one.
/// Coordinates use the shortest decimal form that round-trips.
std::string format_annotations(std::span<const BBox> boxes);
void write_annotation_file(const std::filesystem::path& path, std::span<const BBox> boxes);

/// Binary 8-bit PPM (P6) <-> (1, 3, H, W) tensor in [0, 1].
void write_ppm(const std::filesystem::path& path, const Tensor4& image);
Tensor4 read_ppm(const std::filesystem::path& path);

}  // namespace moonnet
