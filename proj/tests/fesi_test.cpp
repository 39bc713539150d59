// Copyright 2026 The SlideCarver Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "slidecarver/fesi.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "slidecarver/eval.hpp"

namespace slidecarver {
namespace {

BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1, BinaryMask m = {}) {
  if (m.width() == 0) m = BinaryMask(w, h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  }
  return m;
}

// Flat gray background with random texture wherever `tissue` is set.
RgbImage textured(const BinaryMask& tissue, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(tissue.width(), tissue.height(), {230, 230, 230});
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!tissue(x, y)) continue;
      const auto v = static_cast<std::uint8_t>(60 + rng.below(160));
      img.set(x, y, {v, static_cast<std::uint8_t>(v / 2), v});
    }
  }
  return img;
}

TEST(FesiParams, Validation) {
  FesiParams p;
  EXPECT_NO_THROW(p.validate());
  p.median_ksize = 44;
  EXPECT_THROW(p.validate(), UsageError);
  p = {};
  p.seed_value_threshold = 0.0;
  EXPECT_THROW(p.validate(), UsageError);
}

TEST(FesiRefine, LargeComponentKept) {
  const BinaryMask m = rect_mask(400, 400, 50, 50, 351, 351);  // max distance 151
  EXPECT_EQ(fesi_refine(m), m);
}

TEST(FesiRefine, LoneSpeckRemoved) {
  BinaryMask m = rect_mask(600, 400, 20, 20, 281, 281);
  const BinaryMask big = m;
  m = rect_mask(600, 400, 550, 350, 555, 355, m);  // max distance 3
  EXPECT_EQ(fesi_refine(m), big);
}

TEST(FesiRefine, NearbySmallRegionKeptUnderLargerRadius) {
  // The seed of a block with max distance 120 sits 120 px from any other
  // region, so the proximity clause needs a radius above that to matter.
  BinaryMask m = rect_mask(500, 300, 10, 10, 251, 251);  // seed near (130, 130)
  m = rect_mask(500, 300, 265, 125, 272, 132, m);        // speck about 138 px away
  FesiParams p;
  EXPECT_EQ(count_ones(fesi_refine(m, p)), 241u * 241u);
  p.seed_distance_threshold = 200.0;
  EXPECT_EQ(fesi_refine(m, p), m);
}

TEST(FesiRefine, ChainOfAcceptedSeeds) {
  // Seeds accepted through proximity become anchors for later regions.
  FesiParams p;
  p.seed_value_threshold = 10.0;
  p.seed_distance_threshold = 30.0;
  BinaryMask m = rect_mask(200, 60, 5, 15, 35, 45);  // max 15 at (19, 29)
  m = rect_mask(200, 60, 41, 25, 51, 35, m);         // max 5 at (45, 29), 26 px away
  m = rect_mask(200, 60, 65, 25, 75, 35, m);         // 24 px from the second seed only
  m = rect_mask(200, 60, 150, 25, 160, 35, m);       // isolated
  const BinaryMask out = fesi_refine(m, p);
  EXPECT_EQ(out(20, 30), 1);
  EXPECT_EQ(out(45, 29), 1);
  EXPECT_EQ(out(70, 30), 1);
  EXPECT_EQ(out(155, 30), 0);
}

TEST(FesiRefine, OutputIsSubsetAndDeterministic) {
  Rng rng(8);
  FesiParams p;
  p.seed_value_threshold = 2.0;
  p.seed_distance_threshold = 6.0;
  for (int t = 0; t < 50; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 32, 32, rng.uniform(0.3, 0.8));
    const BinaryMask out = fesi_refine(m, p);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_LE(out[i], m[i]);
    ASSERT_EQ(fesi_refine(m, p), out);
    // Surviving pixels form whole components of the input.
    const Components c = connected_components(m);
    std::vector<int> kept(c.count + 1, -1);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      int& k = kept[c.labels[i]];
      if (k < 0) k = out[i];
      ASSERT_EQ(k, out[i]);
    }
  }
}

TEST(FillHoles, EnclosedBackgroundBecomesTissue) {
  BinaryMask ring = rect_mask(50, 50, 10, 10, 40, 40);
  for (int y = 20; y < 30; ++y) {
    for (int x = 20; x < 30; ++x) ring(x, y) = 0;
  }
  EXPECT_EQ(fill_holes_from_remote_background(ring), rect_mask(50, 50, 10, 10, 40, 40));
  // Background split by a full-height band: the far side joins the tissue.
  const BinaryMask band = rect_mask(100, 20, 10, 0, 20, 20);
  EXPECT_EQ(fill_holes_from_remote_background(band), rect_mask(100, 20, 0, 0, 20, 20));
  EXPECT_EQ(fill_holes_from_remote_background(BinaryMask(5, 5)), BinaryMask(5, 5));
}

TEST(FesiSegment, UniformSlideIsEmpty) {
  const RgbImage flat(300, 200, {240, 238, 241});
  EXPECT_EQ(count_ones(fesi_segment_image(flat)), 0u);
}

TEST(FesiSegment, TexturedBlockFound) {
  FesiParams p;
  p.seed_value_threshold = 20.0;  // a 60-pixel block peaks at distance 30
  const BinaryMask gt = rect_mask(120, 120, 30, 30, 90, 90);
  EXPECT_GE(jaccard(fesi_segment_image(textured(gt, 1), p), gt), 0.8);

  // On a larger canvas the mean threshold drops and the blur halo grows, but
  // the block interior is still covered.
  const BinaryMask wide = rect_mask(600, 600, 270, 270, 330, 330);
  const BinaryMask got = fesi_segment_image(textured(wide, 1), p);
  EXPECT_GE(jaccard(got, wide), 0.65);
  for (int y = 275; y < 325; ++y) {
    for (int x = 275; x < 325; ++x) ASSERT_EQ(got(x, y), 1) << x << "," << y;
  }
}

TEST(FesiSegment, LargeBlockWithDefaultsAndHoleFilled) {
  BinaryMask gt = rect_mask(600, 600, 100, 100, 500, 500);
  BinaryMask tissue = gt;
  for (int y = 260; y < 340; ++y) {
    for (int x = 260; x < 340; ++x) tissue(x, y) = 0;
  }
  const BinaryMask got = fesi_segment_image(textured(tissue, 2));
  EXPECT_EQ(got(300, 300), 1);
  EXPECT_GE(jaccard(got, gt), 0.9);
}

TEST(FesiSegment, UsesRequestedLevel) {
  const BinaryMask gt = rect_mask(600, 600, 100, 100, 500, 500);
  const RgbImage img = textured(gt, 3);
  RgbImage base(1200, 1200);
  for (int y = 0; y < 1200; ++y) {
    for (int x = 0; x < 1200; ++x) base.set(x, y, img.at(x / 2, y / 2));
  }
  const PyramidImage p = build_pyramid({base, 3.84, 3.84}, 2);
  const BinaryMask got = fesi_segment(p);
  EXPECT_EQ(got.width(), 600);
  EXPECT_EQ(got, fesi_segment_image(p.level(1).pixels));
  FesiParams bad;
  bad.level_spacing = 15.36;
  EXPECT_THROW(fesi_segment(p, bad), DataError);
}

}  // namespace
}  // namespace slidecarver
