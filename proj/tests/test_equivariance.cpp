#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "anchorprop/container.hpp"
#include "anchorprop/equivariance.hpp"
#include "anchorprop/error.hpp"

using namespace anchorprop;

namespace {

Image one_hot(std::size_t size, std::size_t y, std::size_t x) {
  Image img(size, size, 1);
  img.at(y, x) = 1.0f;
  return img;
}

Image checkerboard(std::size_t size, std::size_t cell) {
  Image img(size, size, 1);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) img.at(y, x) = ((y / cell + x / cell) % 2) ? 1.0f : 0.0f;
  return img;
}

// Per-pixel inverse mapping written out from the parameter definitions:
// p' = T + c + S * Sh * R * (p - c), sampled bilinearly with zero padding.
double oracle_pixel(const Image& img, const AffineParams& p, double xo, double yo) {
  const double n = static_cast<double>(img.width);
  const double c = (n - 1.0) / 2.0;
  const double r = p.rotation_deg * std::numbers::pi / 180.0;
  const double shx = std::tan(p.shear_x_deg * std::numbers::pi / 180.0);
  const double shy = std::tan(p.shear_y_deg * std::numbers::pi / 180.0);
  // M = S * Sh * R
  const double r00 = std::cos(r), r01 = -std::sin(r), r10 = std::sin(r), r11 = std::cos(r);
  const double m00 = p.scale * (r00 + shx * r10), m01 = p.scale * (r01 + shx * r11);
  const double m10 = p.scale * (shy * r00 + r10), m11 = p.scale * (shy * r01 + r11);
  const double dx = xo - c - p.translate_x * n, dy = yo - c - p.translate_y * n;
  const double det = m00 * m11 - m01 * m10;
  const double xs = (m11 * dx - m01 * dy) / det + c;
  const double ys = (-m10 * dx + m00 * dy) / det + c;
  const double fx = std::floor(xs), fy = std::floor(ys);
  double v = 0.0;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      const long xx = static_cast<long>(fx) + i, yy = static_cast<long>(fy) + j;
      if (xx < 0 || yy < 0 || xx >= static_cast<long>(img.width) || yy >= static_cast<long>(img.height)) continue;
      const double w = (i ? xs - fx : 1.0 - (xs - fx)) * (j ? ys - fy : 1.0 - (ys - fy));
      v += w * img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    }
  return v;
}

}  // namespace

TEST(SampleAffine, RangesAndDeterminism) {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto p = sample_affine(s);
    ASSERT_NO_THROW(p.validate());
    ASSERT_EQ(p.crop.resize_to, 288u);
    ASSERT_EQ(p.crop.crop_size, 256u);
  }
  auto a = sample_affine(17), b = sample_affine(17);
  EXPECT_EQ(a.rotation_deg, b.rotation_deg);
  EXPECT_EQ(a.crop.offset_x, b.crop.offset_x);
  EXPECT_NE(sample_affine(18).rotation_deg, a.rotation_deg);
  EXPECT_THROW(sample_affine(0, {256, 288}), ParameterError);
}

TEST(SampleAffine, ScaleMean) {
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s) sum += sample_affine(s).scale;
  EXPECT_NEAR(sum / 10000.0, 1.0, 0.005);
}

TEST(AffineParams, ValidateRejectsOutOfRange) {
  auto p = AffineParams::identity(32);
  p.rotation_deg = 5.0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = AffineParams::identity(32);
  p.scale = 1.06;
  EXPECT_THROW(p.validate(), ParameterError);
  p = AffineParams::identity(32);
  p.crop.offset_x = 1;
  EXPECT_THROW(p.validate(), ParameterError);
  nlohmann::json j = sample_affine(3);
  auto q = j.get<AffineParams>();
  EXPECT_EQ(q.shear_y_deg, sample_affine(3).shear_y_deg);
  EXPECT_EQ(q.crop.offset_y, sample_affine(3).crop.offset_y);
}

TEST(Affine2D, InverseAndCompose) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto g = affine_matrix(sample_affine(rng()), 64, 64);
    const auto h = Affine2D::translation(3.5, -2.0);
    const auto id = g.compose(g.inverse());
    for (int i = 0; i < 6; ++i) ASSERT_NEAR(id.m[i], (i == 0 || i == 4) ? 1.0 : 0.0, 1e-12);
    const auto p = g.compose(h).apply(1.0, 2.0);
    const auto q = h.apply(1.0, 2.0);
    const auto r = g.apply(q[0], q[1]);
    ASSERT_NEAR(p[0], r[0], 1e-12);
    ASSERT_NEAR(p[1], r[1], 1e-12);
  }
  EXPECT_THROW((Affine2D{{0, 0, 0, 0, 0, 0}}.inverse()), NumericError);
}

TEST(WarpImage, IdentityIsExact) {
  auto img = make_test_image(32, 32, 3);
  EXPECT_TRUE(bytes_equal(warp_image(img, AffineParams::identity(32)), img));
}

TEST(WarpImage, IntegerTranslationMovesHotPixel) {
  auto img = one_hot(32, 10, 12);
  auto p = AffineParams::identity(32);
  p.translate_x = 1.0 / 32.0;
  auto out = warp_image(img, p);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      EXPECT_NEAR(out.at(y, x), (y == 10 && x == 13) ? 1.0f : 0.0f, 1e-6) << y << "," << x;
}

TEST(WarpImage, CompositeMatchesInverseMapOracle) {
  auto img = checkerboard(48, 5);
  AffineParams p;
  p.rotation_deg = 3.7;
  p.translate_x = -0.03;
  p.translate_y = 0.045;
  p.scale = 0.97;
  p.shear_x_deg = -4.1;
  p.shear_y_deg = 2.2;
  p.crop = {48, 40, 3, 5};
  auto out = warp_image(img, p);
  for (std::size_t y = 0; y < 40; ++y)
    for (std::size_t x = 0; x < 40; ++x) {
      const double want = oracle_pixel(img, p, static_cast<double>(x + 3), static_cast<double>(y + 5));
      ASSERT_NEAR(out.at(y, x), want, 1e-5) << y << "," << x;
    }
}

TEST(WarpImage, OutputStaysInRange) {
  std::mt19937_64 rng(2);
  auto img = make_test_image(40, 40, 3);
  for (int t = 0; t < 200; ++t) {
    auto out = warp_image(img, sample_affine(rng(), {36, 32}));
    ASSERT_EQ(out.width, 32u);
    for (float v : out.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(AugmentPair, SameParamsOnBothImages) {
  auto src = make_test_image(40, 40, 3);
  auto edited = editors::invert(src);
  auto pair = augment_pair(src, edited, 5, {36, 32});
  EXPECT_TRUE(bytes_equal(pair.src, warp_image(src, pair.params)));
  EXPECT_TRUE(bytes_equal(pair.edited, warp_image(edited, pair.params)));
  auto again = augment_pair(src, edited, 5, {36, 32});
  EXPECT_TRUE(bytes_equal(again.edited, pair.edited));
  auto same = augment_pair(src, src, 9, {36, 32});
  EXPECT_TRUE(bytes_equal(same.src, same.edited));
  EXPECT_THROW(augment_pair(src, make_test_image(32, 40, 3), 1), ShapeError);
}

TEST(Equivariance, IdentityAndPointwiseEditors) {
  auto src = make_test_image(40, 40, 3);
  auto id = verify_equivariance(editors::identity, src, 10, 0.0, 0, {36, 32});
  EXPECT_EQ(id.max, 0.0);
  EXPECT_TRUE(id.pass);
  for (const ImageEditor& ed : {ImageEditor(editors::invert), ImageEditor(editors::contrast)}) {
    auto r = verify_equivariance(ed, src, 20, 1e-6, 0, {36, 32});
    EXPECT_LE(r.max, 1e-6);
    EXPECT_TRUE(r.pass);
  }
}

TEST(Equivariance, FlipAgainstTranslationByHand) {
  // One-hot at x = 1 in a 4x4 image, g = +1 pixel in x. editor(g(I)) is hot
  // at x = 1 and g(editor(I)) is hot at x = 3; the valid region is x >= 1
  // (12 pixels), so the mean deviation is 2 / 12.
  auto img = one_hot(4, 0, 1);
  auto g = AffineParams::identity(4);
  g.translate_x = 0.25;
  EXPECT_NEAR(equivariance_deviation(editors::flip_horizontal, img, g), 2.0 / 12.0, 1e-12);
  auto src = make_test_image(40, 40, 3);
  EXPECT_GT(verify_equivariance(editors::flip_horizontal, src, 5, 1e-6, 0, {36, 32}).max, 0.01);
}

TEST(Editors, Values) {
  Image img(1, 2, 1);
  img.pixels = {0.0f, 1.0f};
  EXPECT_EQ(editors::invert(img).pixels, (std::vector<float>{1.0f, 0.0f}));
  EXPECT_EQ(editors::contrast(img).pixels, (std::vector<float>{0.25f, 0.75f}));
  EXPECT_EQ(editors::flip_horizontal(img).pixels, (std::vector<float>{1.0f, 0.0f}));
  Image bad(1, 1, 1);
  bad.pixels = {2.0f};
  EXPECT_THROW(bad.validate(), NumericError);
}

TEST(Images, TensorRoundTripAndDataset) {
  auto src = make_test_image(20, 20, 3);
  EXPECT_TRUE(bytes_equal(tensor_to_image(image_to_tensor(src)), src));
  EXPECT_THROW(tensor_to_image(Tensor{{4, 4}, std::vector<float>(16)}), ShapeError);
  const auto dir = std::filesystem::temp_directory_path() / "anchorprop_augment_test";
  std::filesystem::remove_all(dir);
  emit_augmented_dataset(src, editors::invert(src), 3, 10, dir, {20, 16});
  std::ifstream manifest(dir / "manifest.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(manifest, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("params"));
    ++lines;
  }
  EXPECT_EQ(lines, 3u);
  auto pair1 = augment_pair(src, editors::invert(src), 11, {20, 16});
  EXPECT_TRUE(bytes_equal(tensor_to_image(load_tensor(dir / "pair_00001_edited.apft")), pair1.edited));
  std::filesystem::remove_all(dir);
}
