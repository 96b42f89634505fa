#include "anchorprop/equivariance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "anchorprop/container.hpp"
#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

constexpr double kMaxRotationDeg = 5.0;
constexpr double kMaxTranslate = 0.05;
constexpr double kMinScale = 0.95;
constexpr double kMaxScale = 1.05;
constexpr double kMaxShearDeg = 5.0;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Bilinear sample with zero padding outside the image.
float sample_zero_pad(const Image& img, double x, double y, std::size_t c) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const auto x0 = static_cast<long>(fx0);
  const auto y0 = static_cast<long>(fy0);
  auto tap = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= static_cast<long>(img.width) ||
        yy >= static_cast<long>(img.height)) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c);
  };
  const double v = (1.0 - ay) * ((1.0 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1)) +
                   ay * ((1.0 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1));
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

bool inside(const Image& img, double x, double y) {
  constexpr double eps = 1e-9;
  return x >= -eps && y >= -eps && x <= static_cast<double>(img.width) - 1.0 + eps &&
         y <= static_cast<double>(img.height) - 1.0 + eps;
}

Image crop(const Image& img, const CropParams& c) {
  Image out(c.crop_size, c.crop_size, img.channels);
  for (std::size_t y = 0; y < c.crop_size; ++y) {
    const float* src = &img.pixels[((y + c.offset_y) * img.width + c.offset_x) * img.channels];
    std::copy(src, src + c.crop_size * img.channels, &out.pixels[y * c.crop_size * img.channels]);
  }
  return out;
}

void check_crop(const CropParams& c) {
  if (c.crop_size == 0 || c.resize_to == 0) throw ParameterError("augment: empty crop or resize");
  if (c.crop_size > c.resize_to || c.offset_x + c.crop_size > c.resize_to ||
      c.offset_y + c.crop_size > c.resize_to) {
    throw ParameterError("augment: crop " + std::to_string(c.crop_size) + " at (" +
                         std::to_string(c.offset_x) + ", " + std::to_string(c.offset_y) +
                         ") exceeds resized size " + std::to_string(c.resize_to));
  }
}

}  // namespace

void Image::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ShapeError("image: empty dimensions");
  if (pixels.size() != height * width * channels) throw ShapeError("image: pixel count mismatch");
  for (float p : pixels) {
    if (!(p >= 0.0f && p <= 1.0f)) throw NumericError("image: pixel outside [0, 1]");
  }
}

bool bytes_equal(const Image& a, const Image& b) {
  return a.height == b.height && a.width == b.width && a.channels == b.channels &&
         (a.pixels.empty() ||
          std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0);
}

void AffineParams::validate() const {
  if (!(std::abs(rotation_deg) < kMaxRotationDeg)) throw ParameterError("affine: rotation out of range");
  if (std::abs(translate_x) > kMaxTranslate || std::abs(translate_y) > kMaxTranslate) {
    throw ParameterError("affine: translation out of range");
  }
  if (scale < kMinScale || scale > kMaxScale) throw ParameterError("affine: scale out of range");
  if (std::abs(shear_x_deg) > kMaxShearDeg || std::abs(shear_y_deg) > kMaxShearDeg) {
    throw ParameterError("affine: shear out of range");
  }
  check_crop(crop);
}

AffineParams AffineParams::identity(std::size_t size) {
  AffineParams p;
  p.crop = {size, size, 0, 0};
  return p;
}

void to_json(nlohmann::json& j, const AffineParams& p) {
  j = nlohmann::json{{"rotation_deg", p.rotation_deg},
                     {"translate", {p.translate_x, p.translate_y}},
                     {"scale", p.scale},
                     {"shear_deg", {p.shear_x_deg, p.shear_y_deg}},
                     {"crop",
                      {{"resize_to", p.crop.resize_to},
                       {"crop_size", p.crop.crop_size},
                       {"offset", {p.crop.offset_x, p.crop.offset_y}}}}};
}

void from_json(const nlohmann::json& j, AffineParams& p) {
  p.rotation_deg = j.at("rotation_deg").get<double>();
  p.translate_x = j.at("translate").at(0).get<double>();
  p.translate_y = j.at("translate").at(1).get<double>();
  p.scale = j.at("scale").get<double>();
  p.shear_x_deg = j.at("shear_deg").at(0).get<double>();
  p.shear_y_deg = j.at("shear_deg").at(1).get<double>();
  const auto& c = j.at("crop");
  p.crop.resize_to = c.at("resize_to").get<std::size_t>();
  p.crop.crop_size = c.at("crop_size").get<std::size_t>();
  p.crop.offset_x = c.at("offset").at(0).get<std::size_t>();
  p.crop.offset_y = c.at("offset").at(1).get<std::size_t>();
}

std::array<double, 2> Affine2D::apply(double x, double y) const {
  return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
}

Affine2D Affine2D::inverse() const {
  const double det = m[0] * m[4] - m[1] * m[3];
  if (std::abs(det) < 1e-15) throw NumericError("affine: singular transform");
  const double i00 = m[4] / det, i01 = -m[1] / det;
  const double i10 = -m[3] / det, i11 = m[0] / det;
  return {{i00, i01, -(i00 * m[2] + i01 * m[5]), i10, i11, -(i10 * m[2] + i11 * m[5])}};
}

Affine2D Affine2D::compose(const Affine2D& o) const {
  return {{m[0] * o.m[0] + m[1] * o.m[3], m[0] * o.m[1] + m[1] * o.m[4],
           m[0] * o.m[2] + m[1] * o.m[5] + m[2], m[3] * o.m[0] + m[4] * o.m[3],
           m[3] * o.m[1] + m[4] * o.m[4], m[3] * o.m[2] + m[4] * o.m[5] + m[5]}};
}

Affine2D Affine2D::translation(double tx, double ty) { return {{1, 0, tx, 0, 1, ty}}; }

AffineParams sample_affine(std::uint64_t seed, AugmentSizes sizes) {
  check_crop({sizes.resize_to, sizes.crop_size, 0, 0});
  std::mt19937_64 rng(seed);
  // Open interval keeps |rotation| strictly below the bound.
  std::uniform_real_distribution<double> rotation(std::nextafter(-kMaxRotationDeg, 0.0),
                                                  kMaxRotationDeg);
  std::uniform_real_distribution<double> translate(-kMaxTranslate, kMaxTranslate);
  std::uniform_real_distribution<double> scale(kMinScale, kMaxScale);
  std::uniform_real_distribution<double> shear(-kMaxShearDeg, kMaxShearDeg);
  std::uniform_int_distribution<std::size_t> offset(0, sizes.resize_to - sizes.crop_size);
  AffineParams p;
  p.rotation_deg = rotation(rng);
  p.translate_x = translate(rng);
  p.translate_y = translate(rng);
  p.scale = scale(rng);
  p.shear_x_deg = shear(rng);
  p.shear_y_deg = shear(rng);
  p.crop.resize_to = sizes.resize_to;
  p.crop.crop_size = sizes.crop_size;
  p.crop.offset_x = offset(rng);
  p.crop.offset_y = offset(rng);
  return p;
}

Affine2D affine_matrix(const AffineParams& p, std::size_t width, std::size_t height) {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  const double th = deg2rad(p.rotation_deg);
  const Affine2D rotate{{std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0}};
  const Affine2D shear{{1, std::tan(deg2rad(p.shear_x_deg)), 0, std::tan(deg2rad(p.shear_y_deg)), 1, 0}};
  const Affine2D scale{{p.scale, 0, 0, 0, p.scale, 0}};
  const Affine2D to_origin = Affine2D::translation(-cx, -cy);
  const Affine2D back = Affine2D::translation(cx + p.translate_x * static_cast<double>(width),
                                              cy + p.translate_y * static_cast<double>(height));
  return back.compose(scale.compose(shear.compose(rotate.compose(to_origin))));
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  img.validate();
  if (height == img.height && width == img.width) return img;
  Image out(height, width, img.channels);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double max_x = static_cast<double>(img.width) - 1.0;
  const double max_y = static_cast<double>(img.height) - 1.0;
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double ay = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double ax = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = (1.0 - ay) * ((1.0 - ax) * img.at(y0, x0, c) + ax * img.at(y0, x1, c)) +
                         ay * ((1.0 - ax) * img.at(y1, x0, c) + ax * img.at(y1, x1, c));
        out.at(y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image warp_affine(const Image& img, const Affine2D& forward) {
  const Affine2D inv = forward.inverse();
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto src = inv.apply(static_cast<double>(x), static_cast<double>(y));
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = sample_zero_pad(img, src[0], src[1], c);
      }
    }
  }
  return out;
}

Image warp_image(const Image& img, const AffineParams& params) {
  check_crop(params.crop);
  const std::size_t n = params.crop.resize_to;
  const Image resized = resize_bilinear(img, n, n);
  const Image warped = warp_affine(resized, affine_matrix(params, n, n));
  return crop(warped, params.crop);
}

std::vector<std::uint8_t> warp_valid_mask(const AffineParams& params) {
  check_crop(params.crop);
  const std::size_t n = params.crop.resize_to;
  const std::size_t s = params.crop.crop_size;
  const Affine2D inv = affine_matrix(params, n, n).inverse();
  const Image bounds(n, n, 1);
  std::vector<std::uint8_t> mask(s * s);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const auto src = inv.apply(static_cast<double>(x + params.crop.offset_x),
                                 static_cast<double>(y + params.crop.offset_y));
      mask[y * s + x] = inside(bounds, src[0], src[1]) ? 1 : 0;
    }
  }
  return mask;
}

AugmentedPair augment_pair(const Image& src, const Image& edited, std::uint64_t seed,
                           AugmentSizes sizes) {
  if (src.height != edited.height || src.width != edited.width || src.channels != edited.channels) {
    throw ShapeError("augment_pair: source and edited images differ in shape");
  }
  const AffineParams params = sample_affine(seed, sizes);
  return {warp_image(src, params), warp_image(edited, params), params};
}

double equivariance_deviation(const ImageEditor& editor, const Image& src, const AffineParams& g) {
  const Image lhs = editor(warp_image(src, g));
  const Image rhs = warp_image(editor(src), g);
  if (lhs.height != rhs.height || lhs.width != rhs.width || lhs.channels != rhs.channels) {
    throw ShapeError("verify_equivariance: editor changed the image shape");
  }
  const auto mask = warp_valid_mask(g);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (mask[p] == 0) continue;
    for (std::size_t c = 0; c < lhs.channels; ++c) {
      const std::size_t i = p * lhs.channels + c;
      total += std::abs(static_cast<double>(lhs.pixels[i]) - static_cast<double>(rhs.pixels[i]));
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

void to_json(nlohmann::json& j, const EquivarianceReport& r) {
  j = nlohmann::json{{"trials", r.deviations.size()}, {"mean_deviation", r.mean},
                     {"max_deviation", r.max},    {"tolerance", r.tolerance},
                     {"pass", r.pass},            {"deviations", r.deviations}};
}

EquivarianceReport verify_equivariance(const ImageEditor& editor, const Image& src,
                                       std::size_t n_trials, double tol, std::uint64_t base_seed,
                                       AugmentSizes sizes) {
  src.validate();
  EquivarianceReport report;
  report.tolerance = tol;
  report.deviations.resize(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    report.deviations[i] = equivariance_deviation(editor, src, sample_affine(base_seed + i, sizes));
  }
  double sum = 0.0;
  for (double d : report.deviations) {
    sum += d;
    report.max = std::max(report.max, d);
  }
  report.mean = n_trials == 0 ? 0.0 : sum / static_cast<double>(n_trials);
  report.pass = report.max <= tol;
  return report;
}

Tensor image_to_tensor(const Image& img) {
  img.validate();
  return Tensor{{img.height, img.width, img.channels}, img.pixels};
}

Image tensor_to_image(const Tensor& t) {
  if (t.dims.size() != 3) throw ShapeError("image: expected an (H, W, C) tensor");
  Image img(t.dims[0], t.dims[1], t.dims[2]);
  img.pixels = t.values;
  img.validate();
  return img;
}

void emit_augmented_dataset(const Image& src, const Image& edited, std::size_t count,
                            std::uint64_t base_seed, const std::filesystem::path& out_dir,
                            AugmentSizes sizes) {
  src.validate();
  edited.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<AffineParams> params(count);
  std::vector<std::string> errors(count);
  const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      auto pair = augment_pair(src, edited, base_seed + idx, sizes);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "pair_%05zu", idx);
      save_tensor(out_dir / (std::string(stem) + "_src.apft"), image_to_tensor(pair.src));
      save_tensor(out_dir / (std::string(stem) + "_edited.apft"), image_to_tensor(pair.edited));
      params[idx] = pair.params;
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!errors[i].empty()) throw JobError("augment item " + std::to_string(i) + ": " + errors[i]);
  }
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < count; ++i) {
    manifest << nlohmann::json{{"index", i}, {"seed", base_seed + i}, {"params", params[i]}}.dump()
             << '\n';
  }
}

namespace editors {

Image identity(const Image& img) { return img; }

Image invert(const Image& img) {
  Image out = img;
  for (float& p : out.pixels) p = 1.0f - p;
  return out;
}

Image contrast(const Image& img) {
  Image out = img;
  for (float& p : out.pixels) p = 0.5f * p + 0.25f;
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) {
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
      }
    }
  }
  return out;
}

}  // namespace editors

Image make_test_image(std::size_t height, std::size_t width, std::size_t channels,
                      std::size_t checker) {
  Image img(height, width, channels);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const bool on = ((x / checker) + (y / checker)) % 2 == 0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double gx = static_cast<double>(x) / static_cast<double>(width);
        const double gy = static_cast<double>(y) / static_cast<double>(height);
        const double base = c % 3 == 0 ? gx : (c % 3 == 1 ? gy : 0.5 * (gx + gy));
        img.at(y, x, c) = static_cast<float>(0.6 * base + (on ? 0.35 : 0.05));
      }
    }
  }
  return img;
}

}  // namespace anchorprop
