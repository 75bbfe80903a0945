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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace vdep;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vdep_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Masks spelled out independently of the library: square fills the cell,
// cross is the middle two rows and columns, triangle is the lower-left half.
bool oracle_mask(ShapeKind s, int y, int x) {
  switch (s) {
    case ShapeKind::Square:
      return true;
    case ShapeKind::Cross:
      return y == 1 || y == 2 || x == 1 || x == 2;
    case ShapeKind::Triangle:
      return x <= y;
  }
  return false;
}

}  // namespace

TEST_CASE("vocabulary inventory and ids") {
  const Vocabulary& v = Vocabulary::standard();
  REQUIRE(v.size() == 22);
  const std::vector<std::string> specials{"<pad>", "<bos>", "<eos>", "<image>", "<auto_image>", "<describe>"};
  for (int i = 0; i < 6; ++i) CHECK(v.token(i) == specials[static_cast<std::size_t>(i)]);
  CHECK(v.id("<image>") != v.id("<auto_image>"));
  CHECK(v.id("<auto_image>") == token::kAutoImage);
  CHECK(v.shape_id(ShapeKind::Square) == 6);
  CHECK(v.color_id(Color::Yellow) == 12);
  CHECK(v.row_id(0) == 13);
  CHECK(v.col_id(3) == 20);
  CHECK(v.at_id() == 21);
  CHECK(Vocabulary::deserialize(v.serialize()) == v);
  CHECK_THROWS_AS(v.id("dog"), IndexError);
  std::set<std::string> unique(v.tokens().begin(), v.tokens().end());
  CHECK(unique.size() == v.size());
}

TEST_CASE("caption template") {
  const Vocabulary& v = Vocabulary::standard();
  const auto c = caption({ShapeKind::Square, Color::Red, 1, 2});
  CHECK(c == std::vector<int>{v.id("square"), v.id("red"), v.id("at"), v.id("r1"), v.id("c2")});
  const auto a = caption({ShapeKind::Cross, Color::Green, 3, 0});
  const auto b = caption({ShapeKind::Cross, Color::Blue, 3, 0});
  int diffs = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diffs += a[i] != b[i];
  CHECK(diffs == 1);
  CHECK(a[1] != b[1]);
}

TEST_CASE("caption and scene are in bijection over all 192 scenes") {
  const auto scenes = all_scenes();
  REQUIRE(scenes.size() == 192);
  std::set<std::vector<int>> captions;
  for (const auto& s : scenes) {
    const auto c = caption(s);
    CHECK(c.size() == kCaptionLength);
    const auto back = decode_caption(c);
    REQUIRE(back.has_value());
    CHECK(*back == s);
    captions.insert(c);
  }
  CHECK(captions.size() == 192);
  CHECK_FALSE(decode_caption(std::vector<int>{6, 9, 21, 13}).has_value());
  CHECK_FALSE(decode_caption(std::vector<int>{9, 6, 21, 13, 17}).has_value());
}

TEST_CASE("glyph masks and noiseless rendering") {
  for (ShapeKind s : {ShapeKind::Square, ShapeKind::Cross, ShapeKind::Triangle}) {
    const GlyphMask m = glyph_mask(s);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) CHECK(m[y][x] == oracle_mask(s, y, x));
    }
  }
  DatasetSpec spec;
  spec.noise = 0.0;
  // A square covers its whole 4x4 cell: 16 pixels x 3 channels = 48 values
  // away from the background, for every color.
  for (Color c : {Color::Red, Color::Green, Color::Blue, Color::Yellow}) {
    const SyntheticScene scene{ShapeKind::Square, c, 2, 1};
    const auto img = render_scene(scene, 99, spec);
    int off_gray = 0;
    for (double v : img) off_gray += v != kBackgroundGray;
    CHECK(off_gray == 48);
  }
  const auto img = render_scene({ShapeKind::Triangle, Color::Blue, 0, 3}, 5, spec);
  const auto rgb = color_rgb(Color::Blue);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const bool in_cell = y / 4 == 0 && x / 4 == 3;
      const bool fg = in_cell && oracle_mask(ShapeKind::Triangle, y % 4, x % 4);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = img[static_cast<std::size_t>((y * 16 + x) * 3 + ch)];
        CHECK(v == (fg ? rgb[static_cast<std::size_t>(ch)] : kBackgroundGray));
      }
    }
  }
}

TEST_CASE("noise touches only the background and keeps pixels in [0,1]") {
  DatasetSpec spec;
  spec.noise = 0.5;
  const SyntheticScene scene{ShapeKind::Cross, Color::Yellow, 3, 3};
  const auto img = render_scene(scene, 1234, spec);
  for (double v : img) CHECK((v >= 0.0 && v <= 1.0));
  const auto rgb = color_rgb(Color::Yellow);
  for (int y = 12; y < 16; ++y) {
    for (int x = 12; x < 16; ++x) {
      if (!oracle_mask(ShapeKind::Cross, y - 12, x - 12)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(img[static_cast<std::size_t>((y * 16 + x) * 3 + ch)] == rgb[static_cast<std::size_t>(ch)]);
      }
    }
  }
}

TEST_CASE("samples are a pure function of spec and index") {
  DatasetSpec spec;
  spec.size = 10;
  spec.master_seed = 77;
  CHECK(generate_sample(spec, 3) == generate_sample(spec, 3));
  CHECK(generate_sample(spec, 3).seed != generate_sample(spec, 4).seed);
  const auto s = generate_sample(spec, 3);
  CHECK(s.response == caption(s.scene));
  CHECK(s.prompt == std::vector<int>{token::kDescribe});
  CHECK(s.image.size() == 16u * 16u * 3u);
  CHECK_THROWS_AS(generate_sample(spec, 10), IndexError);
  const auto all = generate_dataset(spec);
  REQUIRE(all.size() == 10);
  CHECK(all[3] == s);
}

TEST_CASE("dataset file round trip on 100 samples") {
  DatasetSpec spec;
  spec.size = 100;
  spec.master_seed = 5;
  const auto samples = generate_dataset(spec);
  const auto path = temp_file("roundtrip.vdsl");
  write_dataset(samples, path);
  CHECK(read_dataset(path, spec) == samples);
}

TEST_CASE("empty dataset file reads as an empty list") {
  const auto path = temp_file("empty.vdsl");
  { std::ofstream(path).flush(); }
  CHECK(read_dataset(path, DatasetSpec{}).empty());
}

TEST_CASE("malformed records report their line number") {
  DatasetSpec spec;
  spec.size = 3;
  const auto path = temp_file("truncated.vdsl");
  write_dataset(generate_dataset(spec), path);
  std::string text;
  {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  text.resize(text.size() - 20);  // cut into the third record
  { std::ofstream(path) << text; }
  try {
    read_dataset(path, spec);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  const auto bad = temp_file("badfield.vdsl");
  { std::ofstream(bad) << R"({"index":0,"shape":"circle","color":"red","row":0,"col":0,"seed":1,"response_ids":[6,9,21,13,17]})" << '\n'; }
  CHECK_THROWS_AS(read_dataset(bad, spec), ParseError);
  CHECK_THROWS_AS(read_dataset(temp_file("missing.vdsl"), spec), IoError);
}

TEST_CASE("dataset spec validation") {
  DatasetSpec spec;
  spec.size = 0;
  CHECK_THROWS(validate(spec));
}
