#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anchorprop/attention.hpp"
#include "anchorprop/equivariance.hpp"

namespace anchorprop {

enum class MotionType { kIntegerShift, kSubTokenShift, kAffinePath };

std::string to_string(MotionType m);
MotionType parse_motion_type(const std::string& text);

struct ClipSpec {
  std::uint64_t seed = 0;
  std::size_t n_frames = 8;
  std::size_t grid_h = 32;
  std::size_t grid_w = 32;
  std::size_t dim = 64;
  // Pixel resolution the token grid is evaluated at; stride = image_size / grid_w.
  std::size_t image_size = 256;
  MotionType motion = MotionType::kIntegerShift;
  // Content displacement per frame, in tokens. Integer shifts must be whole.
  double shift_x = 0.0;
  double shift_y = 0.0;
  // Affine path only: per-frame rotation (degrees) and multiplicative scale.
  double rotation_deg = 0.0;
  double scale = 1.0;
  // Independent Gaussian features per texture token (one-hot when the texture
  // has no more tokens than dim); otherwise a 3x3 box-blurred field.
  bool distinct_tokens = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const ClipSpec& s);
void from_json(const nlohmann::json& j, ClipSpec& s);

class SyntheticClip {
 public:
  SyntheticClip(ClipSpec spec, std::vector<FrameFeatures> frames, std::vector<Affine2D> motion);

  const ClipSpec& spec() const { return spec_; }
  const std::vector<FrameFeatures>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  double stride() const;

  // Content motion of frame 0 into frame t, in pixels.
  const Affine2D& motion(std::size_t t) const { return motion_.at(t); }

  // Ground-truth position in frame `to` of the content at (x, y) in frame `from`.
  std::array<double, 2> map_point(std::size_t from, std::size_t to, double x, double y) const;

  // Dense forward map for every pixel of frame `from`: (image_size^2, 2) with
  // row index y * image_size + x.
  Matrix forward_map(std::size_t from, std::size_t to) const;

 private:
  ClipSpec spec_;
  std::vector<FrameFeatures> frames_;
  std::vector<Affine2D> motion_;
};

SyntheticClip generate_clip(const ClipSpec& spec);

}  // namespace anchorprop
