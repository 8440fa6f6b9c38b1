#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vlaudit/imagestats.hpp"
#include "vlaudit/png_io.hpp"

using namespace vlaudit;

namespace {

GrayImage random_gray(std::mt19937_64& rng, std::size_t w, std::size_t h, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  GrayImage g(w, h);
  for (auto& p : g.pixels) p = u(rng);
  return g;
}

FaceMask disc_mask(std::size_t w, std::size_t h) {
  FaceMask m{w, h, std::vector<std::uint8_t>(w * h)};
  const double cx = w / 2.0, cy = h / 2.0, r = std::min(w, h) / 3.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      m.inside[y * w + x] = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return m;
}

}  // namespace

TEST(Luma, Weights) {
  RgbImage img(3, 1);
  img.at(0, 0, 0) = img.at(0, 0, 1) = img.at(0, 0, 2) = 1.0;
  img.at(2, 0, 1) = 1.0;
  const auto g = to_gray(img);
  EXPECT_NEAR(g.pixels[0], 1.0, 1e-15);
  EXPECT_EQ(g.pixels[1], 0.0);
  EXPECT_NEAR(g.pixels[2], 0.587, 1e-15);
}

TEST(BrightnessMatch, IdentityAndHalving) {
  std::mt19937_64 rng(1);
  const auto ref = random_gray(rng, 20, 16, 0.1, 0.9);
  const auto mask = disc_mask(20, 16);
  const auto same = brightness_match(ref, ref, mask);
  EXPECT_DOUBLE_EQ(same.scale, 1.0);
  EXPECT_EQ(same.image.pixels, ref.pixels);

  GrayImage half = ref;
  for (auto& p : half.pixels) p *= 0.5;
  const auto r = brightness_match(half, ref, mask);
  EXPECT_NEAR(r.scale, 2.0, 1e-12);
  EXPECT_EQ(r.clipped_pixels, 0u);
  EXPECT_NEAR(masked_mean(r.image, mask), masked_mean(ref, mask), 1e-6);
}

TEST(BrightnessMatch, RestoresMeanOnRandomNonClippingFixtures) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ref = random_gray(rng, 32, 32, 0.2, 0.5);
    const auto var = random_gray(rng, 32, 32, 0.3, 0.6);
    const auto mask = disc_mask(32, 32);
    const auto r = brightness_match(var, ref, mask);
    ASSERT_EQ(r.clipped_pixels, 0u);
    EXPECT_NEAR(masked_mean(r.image, mask), masked_mean(ref, mask), 1e-6);
    EXPECT_NEAR(r.residual, 0.0, 1e-12);
  }
}

TEST(BrightnessMatch, ClippingIsReported) {
  GrayImage ref(4, 1, 0.8), var(4, 1);
  var.pixels = {0.1, 0.1, 0.1, 0.9};  // mean 0.3 -> scale 8/3 pushes 0.9 past 1
  FaceMask mask{4, 1, {1, 1, 1, 1}};
  const auto r = brightness_match(var, ref, mask);
  EXPECT_EQ(r.clipped_pixels, 1u);
  EXPECT_EQ(r.image.pixels[3], 1.0);
  const double expected = (3 * 0.1 * (0.8 / 0.3) + 1.0) / 4 - 0.8;
  EXPECT_NEAR(r.residual, expected, 1e-12);
  EXPECT_LT(r.residual, 0.0);
}

TEST(BrightnessMatch, Errors) {
  GrayImage a(4, 4, 0.5), b(5, 4, 0.5), black(4, 4, 0.0);
  const auto mask = disc_mask(4, 4);
  EXPECT_THROW(brightness_match(a, b, mask), Error);
  EXPECT_THROW(brightness_match(a, black, mask), Error);
  FaceMask empty{4, 4, std::vector<std::uint8_t>(16, 0)};
  EXPECT_THROW(brightness_match(a, a, empty), Error);
}

TEST(SignHeatmap, OnesZerosAndOracle) {
  std::mt19937_64 rng(3);
  const auto base = random_gray(rng, 9, 7, 0.0, 0.5);
  GrayImage brighter = base;
  for (auto& p : brighter.pixels) p += 0.1;
  std::vector<std::pair<GrayImage, GrayImage>> up = {{brighter, base}, {brighter, base}};
  for (double v : sign_heatmap(up).values) EXPECT_EQ(v, 1.0);
  std::vector<std::pair<GrayImage, GrayImage>> same = {{base, base}};
  for (double v : sign_heatmap(same).values) EXPECT_EQ(v, 0.0);

  std::vector<std::pair<GrayImage, GrayImage>> mixed;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> raw;
  for (int i = 0; i < 4; ++i) {
    auto a = random_gray(rng, 9, 7), b = random_gray(rng, 9, 7);
    for (std::size_t k = 0; k < a.pixels.size(); k += 5) b.pixels[k] = a.pixels[k];  // some ties
    mixed.emplace_back(a, b);
    raw.emplace_back(a.pixels, b.pixels);
  }
  EXPECT_EQ(sign_heatmap(mixed).values, oracle::sign_heatmap(raw, 63));
}

TEST(SignHeatmap, SwappingPairsNegatesExactly) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::pair<GrayImage, GrayImage>> pairs, swapped;
    const std::size_t n = 1 + rng() % 7;
    for (std::size_t i = 0; i < n; ++i) {
      auto a = random_gray(rng, 13, 11), b = random_gray(rng, 13, 11);
      pairs.emplace_back(a, b);
      swapped.emplace_back(b, a);
    }
    const auto g = sign_heatmap(pairs), s = sign_heatmap(swapped);
    for (std::size_t i = 0; i < g.values.size(); ++i) EXPECT_EQ(g.values[i], -s.values[i]);
  }
  std::vector<std::pair<GrayImage, GrayImage>> bad = {{GrayImage(2, 2), GrayImage(3, 2)}};
  EXPECT_THROW(sign_heatmap(bad), Error);
  EXPECT_THROW(sign_heatmap(std::vector<std::pair<GrayImage, GrayImage>>{}), Error);
}

TEST(Crop, CausalFaceWindows) {
  RgbImage img(512, 512);
  for (std::size_t y = 0; y < 512; ++y)
    for (std::size_t x = 0; x < 512; ++x) img.at(x, y, 0) = static_cast<double>(x), img.at(x, y, 1) = static_cast<double>(y);
  const auto f = crop_causalface(img, PoseSide::frontal);
  EXPECT_EQ(f.width, 432u);
  EXPECT_EQ(f.height, 432u);
  EXPECT_EQ(f.at(0, 0, 0), 40.0);
  EXPECT_EQ(f.at(431, 431, 0), 471.0);
  EXPECT_EQ(f.at(431, 431, 1), 431.0);
  EXPECT_EQ(crop_causalface(img, PoseSide::negative).at(0, 0, 0), 0.0);
  EXPECT_EQ(crop_causalface(img, PoseSide::positive).at(431, 0, 0), 511.0);
  EXPECT_EQ(pose_side(-1.0), PoseSide::negative);
  EXPECT_EQ(pose_side(0.0), PoseSide::frontal);
  EXPECT_EQ(pose_side(2.0), PoseSide::positive);
  EXPECT_THROW(crop_causalface(RgbImage(500, 512)), Error);

  FaceMask mask{512, 512, std::vector<std::uint8_t>(512 * 512, 0)};
  mask.inside[100 * 512 + 40] = 1;
  const auto cm = crop_causalface(mask, PoseSide::frontal);
  EXPECT_EQ(cm.inside[100 * 432 + 0], 1);
  EXPECT_EQ(cm.count(), 1u);
}

TEST(Colormap, DivergingEndpoints) {
  using C = std::array<std::uint16_t, 3>;
  EXPECT_EQ(diverging_color(-1.0), (C{0, 0, 65535}));
  EXPECT_EQ(diverging_color(0.0), (C{65535, 65535, 65535}));
  EXPECT_EQ(diverging_color(1.0), (C{65535, 0, 0}));
  EXPECT_EQ(diverging_color(7.0), diverging_color(1.0));
}

TEST(Png, RoundTripsAndHeatmapDepth) {
  fixtures::TempDir dir;
  std::mt19937_64 rng(6);
  GrayImage g(17, 9);
  for (auto& p : g.pixels) p = static_cast<double>(rng() % 256) / 255.0;
  write_png_gray(dir / "g.png", g);
  const auto back = read_png_gray(dir / "g.png");
  ASSERT_EQ(back.width, 17u);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(back.pixels[i], g.pixels[i], 1e-12);

  RgbImage c(5, 4);
  for (auto& p : c.pixels) p = static_cast<double>(rng() % 256) / 255.0;
  write_png_rgb(dir / "c.png", c);
  const auto cb = read_png_rgb(dir / "c.png");
  for (std::size_t i = 0; i < c.pixels.size(); ++i) EXPECT_NEAR(cb.pixels[i], c.pixels[i], 1e-12);

  HeatGrid grid{3, 2, {-1, -0.5, 0, 0.25, 0.5, 1}};
  write_heatmap_png(dir / "h.png", grid);
  const auto bytes = fixtures::slurp(dir / "h.png");
  ASSERT_GT(bytes.size(), 26u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[24]), 16);  // IHDR bit depth
  EXPECT_EQ(static_cast<unsigned char>(bytes[25]), 2);   // truecolour

  std::ostringstream csv;
  write_grid_csv(csv, grid);
  EXPECT_EQ(csv.str(), "-1,-0.5,0\n0.25,0.5,1\n");
  EXPECT_THROW(read_png_rgb(dir / "missing.png"), Error);
}
