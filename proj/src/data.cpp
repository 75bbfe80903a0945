/*
 * Copyright 2026 The vdep Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "vdep/data.hpp"

#include "vdep/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>
#include <algorithm>

namespace vdep {

namespace {

constexpr std::array<std::string_view, kShapeCount> kShapeNames = {"square", "cross", "triangle"};
constexpr std::array<std::string_view, kColorCount> kColorNames = {"red", "green", "blue", "yellow"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::vector<std::string> standard_tokens() {
  std::vector<std::string> t = {"<pad>", "<bos>", "<eos>", "<image>", "<auto_image>", "<describe>"};
  for (auto s : kShapeNames) t.emplace_back(s);
  for (auto c : kColorNames) t.emplace_back(c);
  for (int r = 0; r < kGridCells; ++r) t.push_back("r" + std::to_string(r));
  for (int c = 0; c < kGridCells; ++c) t.push_back("c" + std::to_string(c));
  t.emplace_back("at");
  return t;
}

}  // namespace

std::string_view to_string(ShapeKind s) { return kShapeNames[static_cast<int>(s)]; }
std::string_view to_string(Color c) { return kColorNames[static_cast<int>(c)]; }

std::optional<ShapeKind> parse_shape(std::string_view s) {
  for (int i = 0; i < kShapeCount; ++i) {
    if (kShapeNames[i] == s) return static_cast<ShapeKind>(i);
  }
  return std::nullopt;
}

std::optional<Color> parse_color(std::string_view s) {
  for (int i = 0; i < kColorCount; ++i) {
    if (kColorNames[i] == s) return static_cast<Color>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(standard_tokens());
  return vocab;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find('\n') != std::string::npos) {
      throw ParseError(i + 1, "invalid token");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (tokens_[i] == tokens_[j]) throw ParseError(i + 1, "duplicate token '" + tokens_[i] + "'");
    }
  }
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

std::optional<int> Vocabulary::find(std::string_view tok) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == tok) return static_cast<int>(i);
  }
  return std::nullopt;
}

int Vocabulary::id(std::string_view tok) const {
  auto found = find(tok);
  if (!found) throw IndexError("unknown token '" + std::string(tok) + "'");
  return *found;
}

int Vocabulary::shape_id(ShapeKind s) const { return id(to_string(s)); }
int Vocabulary::color_id(Color c) const { return id(to_string(c)); }
int Vocabulary::row_id(int row) const { return id("r" + std::to_string(row)); }
int Vocabulary::col_id(int col) const { return id("c" + std::to_string(col)); }
int Vocabulary::at_id() const { return id("at"); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    tokens.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------

GlyphMask glyph_mask(ShapeKind s) {
  GlyphMask m{};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      switch (s) {
        case ShapeKind::Square:
          m[y][x] = true;
          break;
        case ShapeKind::Cross:
          m[y][x] = (y == 1 || y == 2 || x == 1 || x == 2);
          break;
        case ShapeKind::Triangle:
          m[y][x] = (x <= y);
          break;
      }
    }
  }
  return m;
}

std::array<double, 3> color_rgb(Color c) {
  switch (c) {
    case Color::Red:
      return {1.0, 0.0, 0.0};
    case Color::Green:
      return {0.0, 1.0, 0.0};
    case Color::Blue:
      return {0.0, 0.0, 1.0};
    case Color::Yellow:
      return {1.0, 1.0, 0.0};
  }
  return {0.0, 0.0, 0.0};
}

std::vector<SyntheticScene> all_scenes() {
  std::vector<SyntheticScene> out;
  out.reserve(kShapeCount * kColorCount * kGridCells * kGridCells);
  for (int s = 0; s < kShapeCount; ++s)
    for (int c = 0; c < kColorCount; ++c)
      for (int r = 0; r < kGridCells; ++r)
        for (int k = 0; k < kGridCells; ++k)
          out.push_back({static_cast<ShapeKind>(s), static_cast<Color>(c), r, k});
  return out;
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index) {
  return splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

std::vector<int> caption(const SyntheticScene& scene) {
  const auto& v = Vocabulary::standard();
  return {v.shape_id(scene.shape), v.color_id(scene.color), v.at_id(), v.row_id(scene.row),
          v.col_id(scene.col)};
}

std::optional<SyntheticScene> decode_caption(std::span<const int> ids) {
  if (ids.size() != kCaptionLength) return std::nullopt;
  const auto& v = Vocabulary::standard();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v.size()) return std::nullopt;
  }
  auto shape = parse_shape(v.token(ids[0]));
  auto color = parse_color(v.token(ids[1]));
  if (!shape || !color || ids[2] != v.at_id()) return std::nullopt;
  SyntheticScene s{*shape, *color, -1, -1};
  for (int r = 0; r < kGridCells; ++r) {
    if (ids[3] == v.row_id(r)) s.row = r;
    if (ids[4] == v.col_id(r)) s.col = r;
  }
  if (s.row < 0 || s.col < 0) return std::nullopt;
  return s;
}

void validate(const DatasetSpec& spec) {
  if (spec.size < 1) throw ConfigError("data.size: must be >= 1");
  if (spec.image_side <= 0 || spec.image_side % kGridCells != 0) {
    throw ConfigError("data.image_side: must be a positive multiple of " +
                      std::to_string(kGridCells));
  }
  if (spec.channels != 3) throw ConfigError("data.channels: scenes are rendered in RGB (3)");
  if (spec.noise < 0.0 || spec.noise > 0.5) throw ConfigError("data.noise: must lie in [0, 0.5]");
}

std::vector<double> render_scene(const SyntheticScene& scene, std::uint64_t seed,
                                 const DatasetSpec& spec) {
  const int side = spec.image_side;
  const int ch = spec.channels;
  const int cell = side / kGridCells;
  const GlyphMask mask = glyph_mask(scene.shape);
  const auto rgb = color_rgb(scene.color);

  std::mt19937_64 rng(splitmix64(seed + 1));
  std::uniform_real_distribution<double> noise(-spec.noise, spec.noise);

  std::vector<double> img(static_cast<std::size_t>(side) * side * ch);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool in_cell = (y / cell == scene.row) && (x / cell == scene.col);
      const bool fg = in_cell && mask[(y % cell) * 4 / cell][(x % cell) * 4 / cell];
      for (int c = 0; c < ch; ++c) {
        // draw unconditionally so the noise stream does not depend on the glyph
        const double n = spec.noise > 0.0 ? noise(rng) : 0.0;
        img[(static_cast<std::size_t>(y) * side + x) * ch + c] = fg ? rgb[c] : kBackgroundGray + n;
      }
    }
  }
  return img;
}

MultimodalSample generate_sample(const DatasetSpec& spec, std::size_t index) {
  if (index >= spec.size) {
    throw IndexError("sample index " + std::to_string(index) + " >= dataset size " +
                     std::to_string(spec.size));
  }
  MultimodalSample s;
  s.index = index;
  s.seed = sample_seed(spec.master_seed, index);
  std::mt19937_64 rng(s.seed);
  std::uniform_int_distribution<int> shape(0, kShapeCount - 1);
  std::uniform_int_distribution<int> color(0, kColorCount - 1);
  std::uniform_int_distribution<int> cell(0, kGridCells - 1);
  s.scene.shape = static_cast<ShapeKind>(shape(rng));
  s.scene.color = static_cast<Color>(color(rng));
  s.scene.row = cell(rng);
  s.scene.col = cell(rng);
  s.image = render_scene(s.scene, s.seed, spec);
  s.prompt = {token::kDescribe};
  s.response = caption(s.scene);
  return s;
}

std::vector<MultimodalSample> generate_dataset(const DatasetSpec& spec) {
  validate(spec);
  std::vector<MultimodalSample> out;
  out.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) out.push_back(generate_sample(spec, i));
  return out;
}

// ---------------------------------------------------------------------------

void write_dataset(std::span<const MultimodalSample> samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    nlohmann::json rec;
    rec["index"] = s.index;
    rec["shape"] = std::string(to_string(s.scene.shape));
    rec["color"] = std::string(to_string(s.scene.color));
    rec["row"] = s.scene.row;
    rec["col"] = s.scene.col;
    rec["seed"] = s.seed;
    rec["response_ids"] = s.response;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

template <typename T>
T required(const nlohmann::json& rec, const char* key, std::size_t line) {
  if (!rec.contains(key)) throw ParseError(line, std::string("missing field '") + key + "'");
  try {
    return rec.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(line, std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::vector<MultimodalSample> read_dataset(const std::filesystem::path& path,
                                           const DatasetSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MultimodalSample> out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(line_no, "record is not an object");
    static const std::array<const char*, 7> kKeys = {"index", "shape", "color", "row",
                                                     "col",   "seed",  "response_ids"};
    for (const auto& [key, _] : rec.items()) {
      if (std::find_if(kKeys.begin(), kKeys.end(), [&](const char* k) { return key == k; }) ==
          kKeys.end()) {
        throw ParseError(line_no, "unknown field '" + key + "'");
      }
    }
    MultimodalSample s;
    s.index = required<std::size_t>(rec, "index", line_no);
    auto shape = parse_shape(required<std::string>(rec, "shape", line_no));
    auto color = parse_color(required<std::string>(rec, "color", line_no));
    if (!shape) throw ParseError(line_no, "unknown shape");
    if (!color) throw ParseError(line_no, "unknown color");
    s.scene = {*shape, *color, required<int>(rec, "row", line_no), required<int>(rec, "col", line_no)};
    if (s.scene.row < 0 || s.scene.row >= kGridCells || s.scene.col < 0 ||
        s.scene.col >= kGridCells) {
      throw ParseError(line_no, "cell outside the 4x4 grid");
    }
    s.seed = required<std::uint64_t>(rec, "seed", line_no);
    s.response = required<std::vector<int>>(rec, "response_ids", line_no);
    if (s.response != caption(s.scene)) {
      throw ParseError(line_no, "response_ids do not match the scene caption");
    }
    s.prompt = {token::kDescribe};
    s.image = render_scene(s.scene, s.seed, spec);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace vdep
