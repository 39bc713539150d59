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

#include "slidecarver/imgproc.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

namespace slidecarver {
namespace {

constexpr int kTrials = 100;

TEST(Grayscale, WeightsOnPrimaries) {
  RgbImage img(3, 1);
  img.set(0, 0, {255, 255, 255});
  img.set(1, 0, {255, 0, 0});
  img.set(2, 0, {0, 255, 0});
  const GrayImage g = to_grayscale(img);
  EXPECT_NEAR(g(0, 0), 255.0, 1e-12);
  EXPECT_NEAR(g(1, 0), 76.245, 1e-12);
  EXPECT_NEAR(g(2, 0), 149.685, 1e-12);
}

TEST(Grayscale, MatchesOracle) {
  Rng rng(11);
  for (int t = 0; t < kTrials; ++t) {
    const RgbImage img = oracle::random_rgb(rng, 16, 16);
    EXPECT_EQ(to_grayscale(img), oracle::grayscale(img));
  }
}

TEST(Laplacian, ConstantAndImpulse) {
  EXPECT_EQ(laplacian_abs(GrayImage(6, 5, 42.0)), GrayImage(6, 5, 0.0));
  GrayImage g(5, 5);
  g(2, 2) = 1.0;
  const GrayImage l = laplacian_abs(g);
  EXPECT_EQ(l(2, 2), 4.0);
  EXPECT_EQ(l(1, 2), 1.0);
  EXPECT_EQ(l(3, 2), 1.0);
  EXPECT_EQ(l(2, 1), 1.0);
  EXPECT_EQ(l(2, 3), 1.0);
  EXPECT_EQ(l(1, 1), 0.0);
}

TEST(Laplacian, MatchesOracle) {
  Rng rng(12);
  for (int t = 0; t < kTrials; ++t) {
    const GrayImage g = oracle::random_gray(rng, 16, 16);
    const GrayImage a = laplacian_abs(g), b = oracle::laplacian(g);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(GaussianBlur, ConstantStaysConstant) {
  const GrayImage out = gaussian_blur(GrayImage(9, 7, 3.5), 5, 1.3);
  for (double v : out.values()) EXPECT_NEAR(v, 3.5, 1e-12);
}

TEST(GaussianBlur, ImpulseGivesKernel) {
  GrayImage g(15, 15);
  g(7, 7) = 1.0;
  const GrayImage out = gaussian_blur(g, 5, 1.0);
  const auto k = gaussian_kernel_1d(5, 1.0);
  for (int j = -2; j <= 2; ++j) {
    for (int i = -2; i <= 2; ++i) EXPECT_NEAR(out(7 + i, 7 + j), k[i + 2] * k[j + 2], 1e-15);
  }
  EXPECT_EQ(out(7, 4), 0.0);
}

TEST(GaussianBlur, EvenKernelRejected) {
  EXPECT_THROW(gaussian_blur(GrayImage(4, 4), 4, 1.0), UsageError);
  EXPECT_THROW(gaussian_blur(GrayImage(4, 4), 3, 0.0), UsageError);
}

TEST(GaussianBlur, MatchesDenseOracle) {
  Rng rng(13);
  const std::pair<int, double> settings[] = {{5, 1.0}, {15, 4.0}, {7, 1.0}, {3, 0.3}};
  for (int t = 0; t < kTrials; ++t) {
    const auto [k, s] = settings[t % 4];
    const GrayImage g = oracle::random_gray(rng, 16, 16);
    const GrayImage a = gaussian_blur(g, k, s), b = oracle::gaussian(g, k, s);
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_LE(std::abs(a[i] - b[i]), 1e-9 * std::max(1.0, std::abs(b[i])));
    }
  }
}

TEST(MeanThreshold, TiesAreBackground) {
  EXPECT_EQ(count_ones(mean_threshold(GrayImage(4, 4, 7.0))), 0u);
  GrayImage g(4, 2);
  for (int x = 0; x < 4; ++x) g(x, 1) = 100.0;
  const BinaryMask m = mean_threshold(g);
  for (int x = 0; x < 4; ++x) {
    EXPECT_EQ(m(x, 0), 0);
    EXPECT_EQ(m(x, 1), 1);
  }
}

TEST(MeanThreshold, MatchesOracle) {
  Rng rng(14);
  for (int t = 0; t < kTrials; ++t) {
    const GrayImage g = oracle::random_gray(rng, 16, 16);
    EXPECT_EQ(mean_threshold(g), oracle::mean_threshold(g));
  }
}

TEST(MedianFilter, Basics) {
  EXPECT_EQ(median_filter(BinaryMask(8, 8, 1), 5), BinaryMask(8, 8, 1));
  BinaryMask speck(7, 7);
  speck(3, 3) = 1;
  EXPECT_EQ(count_ones(median_filter(speck, 3)), 0u);
  EXPECT_THROW(median_filter(speck, 4), UsageError);
}

TEST(MedianFilter, MatchesOracle) {
  Rng rng(15);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.2, 0.8));
    const int k = 2 * static_cast<int>(rng.below(4)) + 1;
    ASSERT_EQ(median_filter(m, k), oracle::median(m, k)) << "ksize " << k;
  }
}

TEST(Morphology, DiscElement) {
  EXPECT_EQ(disc_element(7).size(), 37u);
  EXPECT_EQ(disc_element(3).size(), 9u);
  EXPECT_EQ(disc_element(1).size(), 1u);
  BinaryMask dot(15, 15);
  dot(7, 7) = 1;
  const BinaryMask d = morph(dot, MorphOp::kDilate, 7, 1);
  EXPECT_EQ(count_ones(d), 37u);
  for (int y = 0; y < 15; ++y) {
    for (int x = 0; x < 15; ++x) {
      EXPECT_EQ(d(x, y), oracle::in_disc(x - 7, y - 7, 7) ? 1 : 0);
    }
  }
}

TEST(Morphology, ErosionPadsWithBackground) {
  const BinaryMask e = morph(BinaryMask(6, 5, 1), MorphOp::kErode, 3, 1);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 6; ++x) {
      const bool border = x == 0 || y == 0 || x == 5 || y == 4;
      EXPECT_EQ(e(x, y), border ? 0 : 1) << x << "," << y;
    }
  }
  EXPECT_THROW(morph(e, MorphOp::kErode, 4, 1), UsageError);
}

TEST(Morphology, MatchesOracle) {
  Rng rng(16);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.3, 0.9));
    const int d = 2 * static_cast<int>(rng.below(4)) + 1;
    const int it = 1 + static_cast<int>(rng.below(3));
    ASSERT_EQ(morph(m, MorphOp::kErode, d, it), oracle::morph(m, true, d, it));
    ASSERT_EQ(morph(m, MorphOp::kDilate, d, it), oracle::morph(m, false, d, it));
  }
}

TEST(Morphology, OpeningIsIdempotent) {
  Rng rng(17);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, 0.7);
    const BinaryMask once = opening(m, 3, 1);
    EXPECT_EQ(opening(once, 3, 1), once);
    EXPECT_EQ(once, oracle::morph(oracle::morph(m, true, 3, 1), false, 3, 1));
  }
}

TEST(DistanceTransform, SmallCases) {
  EXPECT_EQ(distance_transform(BinaryMask(4, 3)), GrayImage(4, 3, 0.0));
  BinaryMask m(3, 3, 1);
  m(0, 0) = 0;
  const GrayImage d = distance_transform(m);
  EXPECT_EQ(d(0, 0), 0.0);
  EXPECT_EQ(d(1, 0), 1.0);
  EXPECT_EQ(d(2, 0), 2.0);
  EXPECT_EQ(d(1, 1), std::sqrt(2.0));
  EXPECT_EQ(d(2, 1), std::sqrt(5.0));
  EXPECT_EQ(d(2, 2), 2.0 * std::sqrt(2.0));
  EXPECT_EQ(distance_transform(BinaryMask(5, 3, 1)), GrayImage(5, 3, 8.0));
}

TEST(DistanceTransform, MatchesOracle) {
  Rng rng(18);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.5, 0.98));
    ASSERT_EQ(distance_transform(m), oracle::distance(m));
  }
  const BinaryMask big = oracle::random_mask(rng, 20, 20, 0.9);
  EXPECT_EQ(distance_transform(big), oracle::distance(big));
}

TEST(FloodFill, Connectivity) {
  EXPECT_EQ(flood_fill(BinaryMask(5, 4), 2, 1), BinaryMask(5, 4, 1));
  // Two zero regions touching only diagonally.
  BinaryMask m(2, 2, 1);
  m(0, 0) = 0;
  m(1, 1) = 0;
  const BinaryMask f = flood_fill(m, 0, 0);
  EXPECT_EQ(count_ones(f), 1u);
  EXPECT_EQ(f(0, 0), 1);
  EXPECT_THROW(flood_fill(m, 2, 0), UsageError);
}

TEST(FloodFill, MatchesOracle) {
  Rng rng(19);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.3, 0.7));
    const int x = static_cast<int>(rng.below(16)), y = static_cast<int>(rng.below(16));
    ASSERT_EQ(flood_fill(m, x, y), oracle::flood(m, x, y));
  }
}

TEST(ConnectedComponents, MatchesOracle) {
  Rng rng(20);
  for (int t = 0; t < kTrials; ++t) {
    const BinaryMask m = oracle::random_mask(rng, 16, 16, rng.uniform(0.3, 0.7));
    int count = 0;
    const LabelImage expected = oracle::components(m, &count);
    const Components c = connected_components(m);
    ASSERT_EQ(c.count, count);
    ASSERT_EQ(c.labels, expected);
  }
}

TEST(ConnectedComponents, DiagonalNeighborsAreSeparate) {
  BinaryMask m(3, 3);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 2) = 1;
  EXPECT_EQ(connected_components(m).count, 3);
}

TEST(Invert, RoundTrip) {
  Rng rng(21);
  const BinaryMask m = oracle::random_mask(rng, 9, 7, 0.5);
  EXPECT_EQ(invert(invert(m)), m);
  EXPECT_EQ(count_ones(invert(m)) + count_ones(m), m.size());
}

}  // namespace
}  // namespace slidecarver
