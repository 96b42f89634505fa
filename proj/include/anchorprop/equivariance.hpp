#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anchorprop/container.hpp"

namespace anchorprop {

// Row-major, channel-interleaved image with values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  void validate() const;
};

bool bytes_equal(const Image& a, const Image& b);

struct CropParams {
  std::size_t resize_to = 288;
  std::size_t crop_size = 256;
  std::size_t offset_x = 0;
  std::size_t offset_y = 0;
};

// One sampled augmentation. Translation is a fraction of the resized image size.
struct AffineParams {
  double rotation_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double scale = 1.0;
  double shear_x_deg = 0.0;
  double shear_y_deg = 0.0;
  CropParams crop;

  // Checks the sampling ranges and crop containment.
  void validate() const;
  static AffineParams identity(std::size_t size);
};

void to_json(nlohmann::json& j, const AffineParams& p);
void from_json(const nlohmann::json& j, AffineParams& p);

// Forward map p' = A p + b in pixel coordinates (pixel centres at integers).
struct Affine2D {
  std::array<double, 6> m = {1, 0, 0, 0, 1, 0};  // [a00 a01 b0; a10 a11 b1]

  std::array<double, 2> apply(double x, double y) const;
  Affine2D inverse() const;
  // (this o other)(p) = this(other(p))
  Affine2D compose(const Affine2D& other) const;
  static Affine2D translation(double tx, double ty);
};

struct AugmentSizes {
  std::size_t resize_to = 288;
  std::size_t crop_size = 256;
};

AffineParams sample_affine(std::uint64_t seed, AugmentSizes sizes = {});

// Rotation about the centre, then shear, then scale, then translation, for an
// image of the given size.
Affine2D affine_matrix(const AffineParams& p, std::size_t width, std::size_t height);

// Half-pixel-centre bilinear resize with edge clamping.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

// out(p) = bilinear sample of img at forward^-1(p); out-of-bounds taps read 0.
Image warp_affine(const Image& img, const Affine2D& forward);

// resize -> affine -> crop. Output is crop_size x crop_size.
Image warp_image(const Image& img, const AffineParams& params);

// 1 where the crop pixel's inverse-mapped source lies inside the resized image.
std::vector<std::uint8_t> warp_valid_mask(const AffineParams& params);

struct AugmentedPair {
  Image src;
  Image edited;
  AffineParams params;
};

AugmentedPair augment_pair(const Image& src, const Image& edited, std::uint64_t seed,
                           AugmentSizes sizes = {});

using ImageEditor = std::function<Image(const Image&)>;

// Mean |editor(g(src)) - g(editor(src))| over the valid region of g.
double equivariance_deviation(const ImageEditor& editor, const Image& src, const AffineParams& g);

struct EquivarianceReport {
  std::vector<double> deviations;
  double mean = 0.0;
  double max = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

void to_json(nlohmann::json& j, const EquivarianceReport& r);

// Samples g with seeds base_seed + i for i in [0, n_trials).
EquivarianceReport verify_equivariance(const ImageEditor& editor, const Image& src,
                                       std::size_t n_trials, double tol,
                                       std::uint64_t base_seed = 0, AugmentSizes sizes = {});

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Writes pair_NNNNN_{src,edited}.apft plus manifest.jsonl. Item i uses seed
// base_seed + i; items are generated in parallel.
void emit_augmented_dataset(const Image& src, const Image& edited, std::size_t count,
                            std::uint64_t base_seed, const std::filesystem::path& out_dir,
                            AugmentSizes sizes = {});

namespace editors {
Image identity(const Image& img);
Image invert(const Image& img);
Image contrast(const Image& img);  // 0.5 p + 0.25
Image flip_horizontal(const Image& img);
}  // namespace editors

// Deterministic test pattern: smooth colour gradients plus a checkerboard.
Image make_test_image(std::size_t height, std::size_t width, std::size_t channels,
                      std::size_t checker = 8);

}  // namespace anchorprop
