#include "moonnet/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "moonnet/errors.hpp"

namespace moonnet {

namespace {

constexpr std::array<std::string_view, 18> kDotaClasses = {
    "plane",          "ship",         "storage-tank",      "baseball-diamond",
    "tennis-court",   "basketball-court", "ground-track-field", "harbor",
    "bridge",         "large-vehicle", "small-vehicle",    "helicopter",
    "roundabout",     "soccer-ball-field", "swimming-pool", "container-crane",
    "airport",        "helipad"};

bool parse_double(std::string_view tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int(std::string_view tok, int& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

std::string shortest(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::span<const std::string_view> dota_class_names() { return kDotaClasses; }

int dota_class_id(std::string_view name) {
  auto it = std::find(kDotaClasses.begin(), kDotaClasses.end(), name);
  if (it == kDotaClasses.end()) return -1;
  return static_cast<int>(it - kDotaClasses.begin());
}

std::vector<BBox> parse_annotations(std::string_view text, std::string_view source) {
  std::vector<BBox> boxes;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#' || toks[0].starts_with("imagesource:") ||
        toks[0].starts_with("gsd:")) {
      continue;
    }
    auto fail = [&](const std::string& why) {
      throw ParseError(std::string(source) + ":" + std::to_string(line_no) + ": " + why);
    };

    BBox b;
    double v = 0.0;
    if (toks.size() == 10 && !parse_double(toks[8], v)) {
      std::array<double, 8> pts{};
      for (int i = 0; i < 8; ++i) {
        if (!parse_double(toks[i], pts[i])) fail("bad polygon coordinate '" + std::string(toks[i]) + "'");
      }
      const int cls = dota_class_id(toks[8]);
      if (cls < 0) fail("unknown DOTA class '" + std::string(toks[8]) + "'");
      int difficult = 0;
      if (!parse_int(toks[9], difficult) || (difficult != 0 && difficult != 1)) {
        fail("difficult flag must be 0 or 1");
      }
      b.x1 = std::min({pts[0], pts[2], pts[4], pts[6]});
      b.x2 = std::max({pts[0], pts[2], pts[4], pts[6]});
      b.y1 = std::min({pts[1], pts[3], pts[5], pts[7]});
      b.y2 = std::max({pts[1], pts[3], pts[5], pts[7]});
      b.class_id = cls;
      b.difficult = difficult == 1;
    } else if (toks.size() == 5 || toks.size() == 6) {
      std::array<double, 4> c{};
      for (int i = 0; i < 4; ++i) {
        if (!parse_double(toks[i], c[i])) fail("bad coordinate '" + std::string(toks[i]) + "'");
      }
      if (!parse_int(toks[4], b.class_id) || b.class_id < 0) fail("bad class id");
      b.x1 = c[0];
      b.y1 = c[1];
      b.x2 = c[2];
      b.y2 = c[3];
      if (toks.size() == 6) {
        double s = 0.0;
        if (!parse_double(toks[5], s) || s < 0.0 || s > 1.0) fail("score must lie in [0, 1]");
        b.score = s;
      }
    } else {
      fail("expected 10 fields (DOTA) or 5-6 fields (simple), got " + std::to_string(toks.size()));
    }
    if (!b.valid()) fail("degenerate box");
    boxes.push_back(b);
  }
  return boxes;
}

std::vector<BBox> read_annotation_file(const std::filesystem::path& path) {
  return parse_annotations(slurp(path), path.string());
}

std::map<std::string, std::vector<BBox>> read_annotation_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ParseError("not a directory: " + dir.string());
  std::map<std::string, std::vector<BBox>> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      out[entry.path().stem().string()] = read_annotation_file(entry.path());
    }
  }
  return out;
}

std::string format_annotations(std::span<const BBox> boxes) {
  std::string out;
  for (const BBox& b : boxes) {
    out += shortest(b.x1) + ' ' + shortest(b.y1) + ' ' + shortest(b.x2) + ' ' + shortest(b.y2) +
           ' ' + std::to_string(b.class_id);
    if (b.score) out += ' ' + shortest(*b.score);
    out += '\n';
  }
  return out;
}

void write_annotation_file(const std::filesystem::path& path, std::span<const BBox> boxes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_annotations(boxes);
}

void write_ppm(const std::filesystem::path& path, const Tensor4& image) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm: expected (1, 3, H, W), got " + s.str());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << s.w << ' ' << s.h << "\n255\n";
  for (int h = 0; h < s.h; ++h) {
    for (int w = 0; w < s.w; ++w) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, h, w), 0.0f, 1.0f);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
  }
}

Tensor4 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1 || maxval != 255) {
    throw ParseError(path.string() + ": only 8-bit binary PPM (P6) is supported");
  }
  in.get();
  Tensor4 img(Shape{1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int byte = in.get();
        if (byte == EOF) throw ParseError(path.string() + ": truncated pixel data");
        img(0, c, y, x) = static_cast<float>(byte) / 255.0f;
      }
    }
  }
  return img;
}

}  // namespace moonnet
