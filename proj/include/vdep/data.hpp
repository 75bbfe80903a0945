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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vdep {

namespace token {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kImage = 3;
inline constexpr int kAutoImage = 4;
inline constexpr int kDescribe = 5;
}  // namespace token

enum class ShapeKind { Square, Cross, Triangle };
enum class Color { Red, Green, Blue, Yellow };

inline constexpr int kShapeCount = 3;
inline constexpr int kColorCount = 4;
inline constexpr int kGridCells = 4;  // scenes live on a 4x4 cell grid
inline constexpr std::size_t kCaptionLength = 5;

std::string_view to_string(ShapeKind s);
std::string_view to_string(Color c);
std::optional<ShapeKind> parse_shape(std::string_view s);
std::optional<Color> parse_color(std::string_view s);

/// Fixed token inventory. Ids 0..5 are the reserved specials, then shape,
/// color, row, column and glue words in that order.
class Vocabulary {
 public:
  static const Vocabulary& standard();

  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view tok) const;
  int id(std::string_view tok) const;  // throws IndexError if absent

  int shape_id(ShapeKind s) const;
  int color_id(Color c) const;
  int row_id(int row) const;
  int col_id(int col) const;
  int at_id() const;

  // One token per line.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
};

struct SyntheticScene {
  ShapeKind shape = ShapeKind::Square;
  Color color = Color::Red;
  int row = 0;
  int col = 0;

  bool operator==(const SyntheticScene&) const = default;
};

using GlyphMask = std::array<std::array<bool, 4>, 4>;
GlyphMask glyph_mask(ShapeKind s);
std::array<double, 3> color_rgb(Color c);
inline constexpr double kBackgroundGray = 0.5;

/// Every scene in enumeration order (3 * 4 * 16 = 192).
std::vector<SyntheticScene> all_scenes();

struct DatasetSpec {
  std::size_t size = 128;
  std::uint64_t master_seed = 0;
  int image_side = 16;
  int channels = 3;
  double noise = 0.05;

  bool operator==(const DatasetSpec&) const = default;
};

struct MultimodalSample {
  std::size_t index = 0;
  SyntheticScene scene;
  std::vector<double> image;  // image_side * image_side * channels, HWC row-major
  std::vector<int> prompt;
  std::vector<int> response;
  std::uint64_t seed = 0;

  bool operator==(const MultimodalSample&) const = default;
};

std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index);

std::vector<int> caption(const SyntheticScene& scene);
std::optional<SyntheticScene> decode_caption(std::span<const int> ids);

/// Renders the scene glyph over a gray background. The seed only drives the
/// background noise, which is uniform in [-noise, noise].
std::vector<double> render_scene(const SyntheticScene& scene, std::uint64_t seed,
                                 const DatasetSpec& spec);

MultimodalSample generate_sample(const DatasetSpec& spec, std::size_t index);
std::vector<MultimodalSample> generate_dataset(const DatasetSpec& spec);

void validate(const DatasetSpec& spec);

/// Line-delimited JSON (.vdsl). Images are not stored; read_dataset
/// re-renders them from scene and seed using the given spec's image settings.
void write_dataset(std::span<const MultimodalSample> samples, const std::filesystem::path& path);
std::vector<MultimodalSample> read_dataset(const std::filesystem::path& path,
                                           const DatasetSpec& spec);

}  // namespace vdep
