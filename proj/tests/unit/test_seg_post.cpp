#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <set>

#include "cyto/error.hpp"
#include "cyto/seg_post.hpp"
#include "oracles.hpp"

using namespace cyto;

namespace {

BinaryMask from_rows(std::initializer_list<const char*> rows) {
  const int h = static_cast<int>(rows.size());
  const int w = static_cast<int>(std::strlen(*rows.begin()));
  BinaryMask m(w, h);
  int y = 0;
  for (const char* r : rows) {
    for (int x = 0; x < w; ++x) m.set(x, y, r[x] == '#');
    ++y;
  }
  return m;
}

Image8 noise_image(int w, int h, uint64_t seed) {
  std::mt19937_64 g(seed);
  Image8 img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<uint8_t>(g() & 0xff);
  return img;
}

}  // namespace

TEST_CASE("binarize uses >= at the threshold") {
  std::vector<float> hi(12, 0.9f), half(12, 0.5f), board(12);
  for (int i = 0; i < 12; ++i) board[i] = ((i / 4 + i % 4) % 2) ? 0.6f : 0.4f;

  CHECK(binarize(hi, 4, 3).count() == 12);
  CHECK(binarize(half, 4, 3, 0.5f).count() == 12);
  const BinaryMask b = binarize(board, 4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) CHECK(b.at(x, y) == ((x + y) % 2 == 1));

  CHECK_THROWS_AS(binarize(hi, 4, 3, 0.0f), ValidationError);
  CHECK_THROWS_AS(binarize(hi, 4, 3, 1.0f), ValidationError);
  CHECK_THROWS_AS(binarize(hi, 5, 3), DimensionError);
}

TEST_CASE("mask image conversion") {
  Image8 g(3, 2, 1);
  g.at(1, 0) = 7;
  g.at(2, 1) = 255;
  const BinaryMask m = mask_from_image(g);
  CHECK(m.count() == 2);
  CHECK(m.at(1, 0));
  const Image8 back = mask_to_image(m);
  CHECK(back.channels == 1);
  CHECK(back.at(1, 0) == 255);
  CHECK(back.at(0, 0) == 0);
  CHECK(mask_from_image(back) == m);
}

TEST_CASE("extract_bbox examples") {
  BinaryMask m(10, 10);
  m.set(3, 2);
  m.set(7, 5);
  CHECK(extract_bbox(m, 1) == BoundingBox{2, 1, 8, 6});

  CHECK(extract_bbox(BinaryMask(6, 4, true), 0) == BoundingBox{0, 0, 5, 3});

  BinaryMask corner(4, 4);
  corner.set(0, 0);
  CHECK(extract_bbox(corner, 5) == BoundingBox{0, 0, 3, 3});

  CHECK_FALSE(extract_bbox(BinaryMask(5, 5), 3).has_value());
  CHECK_THROWS_AS(extract_bbox(m, -1), ValidationError);
}

TEST_CASE("extract_bbox agrees with a full scan and its properties hold") {
  std::mt19937_64 g(101);
  const double densities[] = {0.0, 0.002, 0.05, 0.3, 1.0};
  for (int trial = 0; trial < 400; ++trial) {
    const BinaryMask m = oracle::random_mask(g, 24, densities[trial % 5]);
    const int pad = static_cast<int>(g() % 6);
    const auto got = extract_bbox(m, pad);
    REQUIRE(got == oracle::bbox(m, pad));
    if (!got) continue;

    const auto tight = *extract_bbox(m, 0);
    bool touches[4] = {};
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        if (!m.at(x, y)) continue;
        CHECK(tight.contains({x, y, x, y}));
        touches[0] |= x == tight.x_min;
        touches[1] |= x == tight.x_max;
        touches[2] |= y == tight.y_min;
        touches[3] |= y == tight.y_max;
      }
    CHECK((touches[0] && touches[1] && touches[2] && touches[3]));
    CHECK(got->contains(tight));
    CHECK(extract_bbox(m, pad + 3)->contains(*got));
    CHECK(got->x_max < m.width);
    CHECK(got->y_max < m.height);
  }
}

TEST_CASE("component boxes") {
  const BinaryMask m = from_rows({
      "##......",
      "#.....#.",
      "......#.",
      "..#.....",
      "...#....",
  });
  const auto boxes = extract_component_bboxes(m, 0);
  REQUIRE(boxes.size() == 3);
  CHECK(boxes[0] == BoundingBox{0, 0, 1, 1});
  CHECK(boxes[1] == BoundingBox{6, 1, 6, 2});
  CHECK(boxes[2] == BoundingBox{2, 3, 3, 4});  // diagonal neighbours join

  CHECK(extract_component_bboxes(BinaryMask(4, 4), 2).empty());

  std::mt19937_64 g(5);
  for (int trial = 0; trial < 150; ++trial) {
    const BinaryMask r = oracle::random_mask(g, 16, 0.25);
    const int pad = static_cast<int>(g() % 3);
    CHECK(extract_component_bboxes(r, pad) == oracle::component_boxes(r, pad));
  }
}

TEST_CASE("patch grid examples") {
  const PatchGrid grid = make_patch_grid(2048, 1536, 512, 5, 4);
  REQUIRE(grid.anchors.size() == 20);
  std::set<int> xs, ys;
  for (auto [x, y] : grid.anchors) {
    xs.insert(x);
    ys.insert(y);
    CHECK(x + 512 <= 2048);
    CHECK(y + 512 <= 1536);
  }
  CHECK(std::vector<int>(xs.begin(), xs.end()) == std::vector<int>{0, 384, 768, 1152, 1536});
  CHECK(std::vector<int>(ys.begin(), ys.end()) == std::vector<int>{0, 341, 683, 1024});

  const PatchGrid one = make_patch_grid(512, 512, 512, 1, 1);
  REQUIRE(one.anchors.size() == 1);
  CHECK(one.anchors[0] == std::array<int, 2>{0, 0});

  const PatchGrid two = make_patch_grid(1024, 512, 512, 2, 1);
  REQUIRE(two.anchors.size() == 2);
  CHECK(two.anchors[0] == std::array<int, 2>{0, 0});
  CHECK(two.anchors[1] == std::array<int, 2>{512, 0});

  CHECK_THROWS_AS(make_patch_grid(500, 600, 512), ValidationError);
  CHECK_THROWS_AS(make_patch_grid(1024, 1024, 512, 0, 2), ValidationError);
}

TEST_CASE("patch grid covers the image without duplicates") {
  for (int w : {64, 65, 100, 130}) {
    for (int h : {64, 70, 128}) {
      for (int cols = 1; cols <= 4; ++cols) {
        for (int rows = 1; rows <= 3; ++rows) {
          const PatchGrid grid = make_patch_grid(w, h, 64, cols, rows);
          std::set<std::array<int, 2>> seen(grid.anchors.begin(), grid.anchors.end());
          CHECK(seen.size() == grid.anchors.size());
          if (64 * cols < w || 64 * rows < h) continue;
          std::vector<uint8_t> hit(static_cast<size_t>(w) * h, 0);
          for (auto [x, y] : grid.anchors)
            for (int yy = y; yy < y + 64; ++yy)
              for (int xx = x; xx < x + 64; ++xx) hit[static_cast<size_t>(yy) * w + xx] = 1;
          CHECK(std::count(hit.begin(), hit.end(), 1) == w * h);
        }
      }
    }
  }
}

TEST_CASE("filter_empty") {
  BinaryMask one(4, 4);
  one.set(2, 3);
  std::vector<BinaryMask> masks{BinaryMask(4, 4), one, BinaryMask(4, 4, true)};
  CHECK(filter_empty(masks) == std::vector<size_t>{1, 2});
  std::vector<BinaryMask> dark(3, BinaryMask(3, 3));
  CHECK(filter_empty(dark).empty());

  std::mt19937_64 g(9);
  std::vector<BinaryMask> rnd;
  for (int i = 0; i < 60; ++i) rnd.push_back(oracle::random_mask(g, 5, 0.03));
  std::vector<size_t> expect;
  for (size_t i = 0; i < rnd.size(); ++i) {
    size_t pop = 0;
    for (auto b : rnd[i].bits) pop += b;
    if (pop) expect.push_back(i);
  }
  CHECK(filter_empty(rnd) == expect);
}

TEST_CASE("render_bbox touches only the perimeter band") {
  const Image8 img = noise_image(12, 10, 3);
  const BoundingBox box{3, 2, 7, 6};
  const std::array<uint8_t, 3> red{255, 0, 0};
  Image8 base = img;
  for (auto& p : base.pixels) p = 17;  // never equals red on all channels
  const Image8 out = render_bbox(base, box, red, 1);
  int changed = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool edge = box.contains({x, y, x, y}) && (x == 3 || x == 7 || y == 2 || y == 6);
      const bool diff = out.at(x, y, 0) != 17 || out.at(x, y, 1) != 17 || out.at(x, y, 2) != 17;
      CHECK(diff == edge);
      changed += diff;
    }
  CHECK(changed == 16);

  const Image8 thick = render_bbox(img, box, red, 2);
  CHECK(render_bbox(thick, box, red, 2) == thick);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 12; ++x) {
      const bool band = box.contains({x, y, x, y}) && !BoundingBox{5, 4, 5, 4}.contains({x, y, x, y});
      if (!band)
        for (int c = 0; c < 3; ++c) CHECK(thick.at(x, y, c) == img.at(x, y, c));
    }

  CHECK_THROWS_AS(render_bbox(img, {0, 0, 12, 3}, red), ValidationError);
  CHECK_THROWS_AS(render_bbox(img, box, red, 0), ValidationError);
}

TEST_CASE("crop") {
  const Image8 img = noise_image(8, 6, 4);
  const Image8 c = crop(img, 2, 1, 3, 4);
  CHECK(c.width == 3);
  CHECK(c.height == 4);
  CHECK(c.at(0, 0, 1) == img.at(2, 1, 1));
  CHECK(c.at(2, 3, 2) == img.at(4, 4, 2));
  CHECK_THROWS_AS(crop(img, 6, 0, 3, 2), ValidationError);

  BinaryMask m(5, 5);
  m.set(4, 4);
  CHECK(crop(m, 3, 3, 2, 2).at(1, 1));
  CHECK_THROWS_AS(crop(m, -1, 0, 2, 2), ValidationError);
}
