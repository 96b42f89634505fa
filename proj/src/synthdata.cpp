#include "anchorprop/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

// Texture of feature vectors on an integer token lattice.
struct Texture {
  long origin_x = 0;  // lattice coordinate of frame-0 token (0, 0)
  long origin_y = 0;
  std::size_t w = 0;
  std::size_t h = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  const float* at(long x, long y) const {
    return data.data() + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * dim;
  }
};

Texture make_texture(const ClipSpec& spec, double min_u, double max_u, double min_v, double max_v) {
  Texture tex;
  tex.dim = spec.dim;
  tex.origin_x = 2 - static_cast<long>(std::floor(min_u));
  tex.origin_y = 2 - static_cast<long>(std::floor(min_v));
  tex.w = static_cast<std::size_t>(static_cast<long>(std::ceil(max_u)) + tex.origin_x + 3);
  tex.h = static_cast<std::size_t>(static_cast<long>(std::ceil(max_v)) + tex.origin_y + 3);
  const std::size_t n = tex.w * tex.h;
  tex.data.assign(n * spec.dim, 0.0f);
  std::mt19937_64 rng(spec.seed);
  if (spec.distinct_tokens && n <= spec.dim) {
    std::vector<std::size_t> basis(spec.dim);
    std::iota(basis.begin(), basis.end(), 0);
    std::shuffle(basis.begin(), basis.end(), rng);
    for (std::size_t i = 0; i < n; ++i) tex.data[i * spec.dim + basis[i]] = 1.0f;
    return tex;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (float& v : tex.data) v = static_cast<float>(normal(rng));
  if (spec.distinct_tokens) return tex;
  std::vector<float> blurred(tex.data.size(), 0.0f);
  for (std::size_t y = 0; y < tex.h; ++y) {
    for (std::size_t x = 0; x < tex.w; ++x) {
      for (std::size_t c = 0; c < spec.dim; ++c) {
        double acc = 0.0;
        int taps = 0;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            const long yy = static_cast<long>(y) + dy;
            const long xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(tex.h) || xx >= static_cast<long>(tex.w)) continue;
            acc += tex.data[(static_cast<std::size_t>(yy) * tex.w + static_cast<std::size_t>(xx)) * spec.dim + c];
            ++taps;
          }
        }
        blurred[(y * tex.w + x) * spec.dim + c] = static_cast<float>(acc / taps);
      }
    }
  }
  tex.data = std::move(blurred);
  return tex;
}

// Bilinear lookup at lattice coordinate (u, v) relative to frame-0 tokens.
void sample_texture(const Texture& tex, double u, double v, std::span<float> out) {
  const double x = u + static_cast<double>(tex.origin_x);
  const double y = v + static_cast<double>(tex.origin_y);
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  const float* t00 = tex.at(x0, y0);
  const float* t01 = tex.at(x0 + 1, y0);
  const float* t10 = tex.at(x0, y0 + 1);
  const float* t11 = tex.at(x0 + 1, y0 + 1);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double val = (1.0 - ay) * ((1.0 - ax) * t00[c] + ax * t01[c]) +
                       ay * ((1.0 - ax) * t10[c] + ax * t11[c]);
    out[c] = static_cast<float>(val);
  }
}

Affine2D content_motion(const ClipSpec& spec, std::size_t t) {
  const double stride = static_cast<double>(spec.image_size) / static_cast<double>(spec.grid_w);
  const double td = static_cast<double>(t);
  if (spec.motion != MotionType::kAffinePath) {
    return Affine2D::translation(td * spec.shift_x * stride, td * spec.shift_y * stride);
  }
  AffineParams p;
  p.rotation_deg = td * spec.rotation_deg;
  p.scale = std::pow(spec.scale, td);
  p.translate_x = td * spec.shift_x * stride / static_cast<double>(spec.image_size);
  p.translate_y = td * spec.shift_y * stride / static_cast<double>(spec.image_size);
  return affine_matrix(p, spec.image_size, spec.image_size);
}

}  // namespace

std::string to_string(MotionType m) {
  switch (m) {
    case MotionType::kIntegerShift: return "integer-shift";
    case MotionType::kSubTokenShift: return "sub-token-shift";
    case MotionType::kAffinePath: return "affine-path";
  }
  return "unknown";
}

MotionType parse_motion_type(const std::string& text) {
  if (text == "integer-shift") return MotionType::kIntegerShift;
  if (text == "sub-token-shift") return MotionType::kSubTokenShift;
  if (text == "affine-path") return MotionType::kAffinePath;
  throw ParameterError("unknown motion type '" + text + "'");
}

void ClipSpec::validate() const {
  if (n_frames == 0) throw ParameterError("clip: n_frames must be >= 1");
  if (grid_h == 0 || grid_w == 0 || dim == 0) throw ParameterError("clip: empty grid or dim");
  if (image_size == 0 || image_size % grid_w != 0 || image_size % grid_h != 0) {
    throw ParameterError("clip: image_size must be a multiple of the grid size");
  }
  if (motion == MotionType::kIntegerShift &&
      (shift_x != std::round(shift_x) || shift_y != std::round(shift_y))) {
    throw ParameterError("clip: integer-shift motion needs whole-token shifts");
  }
  if (!(scale > 0.0)) throw ParameterError("clip: scale must be positive");
}

void to_json(nlohmann::json& j, const ClipSpec& s) {
  j = nlohmann::json{{"seed", s.seed},         {"n_frames", s.n_frames},
                     {"grid_h", s.grid_h},     {"grid_w", s.grid_w},
                     {"dim", s.dim},           {"image_size", s.image_size},
                     {"motion", to_string(s.motion)},
                     {"shift_x", s.shift_x},   {"shift_y", s.shift_y},
                     {"rotation_deg", s.rotation_deg}, {"scale", s.scale},
                     {"distinct_tokens", s.distinct_tokens}};
}

void from_json(const nlohmann::json& j, ClipSpec& s) {
  ClipSpec d;
  s.seed = j.value("seed", d.seed);
  s.n_frames = j.value("n_frames", d.n_frames);
  s.grid_h = j.value("grid_h", d.grid_h);
  s.grid_w = j.value("grid_w", d.grid_w);
  s.dim = j.value("dim", d.dim);
  s.image_size = j.value("image_size", d.image_size);
  s.motion = parse_motion_type(j.value("motion", to_string(d.motion)));
  s.shift_x = j.value("shift_x", d.shift_x);
  s.shift_y = j.value("shift_y", d.shift_y);
  s.rotation_deg = j.value("rotation_deg", d.rotation_deg);
  s.scale = j.value("scale", d.scale);
  s.distinct_tokens = j.value("distinct_tokens", d.distinct_tokens);
}

SyntheticClip::SyntheticClip(ClipSpec spec, std::vector<FrameFeatures> frames,
                             std::vector<Affine2D> motion)
    : spec_(std::move(spec)), frames_(std::move(frames)), motion_(std::move(motion)) {
  if (frames_.size() != motion_.size()) throw ShapeError("clip: one motion transform per frame");
}

double SyntheticClip::stride() const {
  return static_cast<double>(spec_.image_size) / static_cast<double>(spec_.grid_w);
}

std::array<double, 2> SyntheticClip::map_point(std::size_t from, std::size_t to, double x,
                                               double y) const {
  const auto p0 = motion_.at(from).inverse().apply(x, y);
  return motion_.at(to).apply(p0[0], p0[1]);
}

Matrix SyntheticClip::forward_map(std::size_t from, std::size_t to) const {
  const std::size_t n = spec_.image_size;
  const Affine2D m = motion_.at(to).compose(motion_.at(from).inverse());
  Matrix out(n * n, 2);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const auto p = m.apply(static_cast<double>(x), static_cast<double>(y));
      out(y * n + x, 0) = static_cast<float>(p[0]);
      out(y * n + x, 1) = static_cast<float>(p[1]);
    }
  }
  return out;
}

SyntheticClip generate_clip(const ClipSpec& spec) {
  spec.validate();
  const double stride = static_cast<double>(spec.image_size) / static_cast<double>(spec.grid_w);
  const double stride_y = static_cast<double>(spec.image_size) / static_cast<double>(spec.grid_h);
  std::vector<Affine2D> motion;
  for (std::size_t t = 0; t < spec.n_frames; ++t) motion.push_back(content_motion(spec, t));

  // Texture lattice coordinates (frame-0 token units) of every token centre.
  std::vector<std::array<double, 2>> coords(spec.n_frames * spec.grid_h * spec.grid_w);
  double min_u = 0, max_u = 0, min_v = 0, max_v = 0;
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    const Affine2D inv = motion[t].inverse();
    for (std::size_t i = 0; i < spec.grid_h; ++i) {
      for (std::size_t j = 0; j < spec.grid_w; ++j) {
        const auto q = inv.apply((static_cast<double>(j) + 0.5) * stride,
                                 (static_cast<double>(i) + 0.5) * stride_y);
        const std::array<double, 2> uv{q[0] / stride - 0.5, q[1] / stride_y - 0.5};
        coords[(t * spec.grid_h + i) * spec.grid_w + j] = uv;
        min_u = std::min(min_u, uv[0]);
        max_u = std::max(max_u, uv[0]);
        min_v = std::min(min_v, uv[1]);
        max_v = std::max(max_v, uv[1]);
      }
    }
  }

  // The last frame must still show some of the first frame's content.
  const double n_px = static_cast<double>(spec.image_size);
  bool overlap = false;
  for (std::size_t i = 0; i < spec.grid_h && !overlap; ++i) {
    for (std::size_t j = 0; j < spec.grid_w && !overlap; ++j) {
      const auto p = motion.front().compose(motion.back().inverse())
                         .apply((static_cast<double>(j) + 0.5) * stride,
                                (static_cast<double>(i) + 0.5) * stride_y);
      overlap = p[0] >= 0.0 && p[1] >= 0.0 && p[0] < n_px && p[1] < n_px;
    }
  }
  if (!overlap) throw ParameterError("clip: motion leaves the first frame's content entirely");

  const Texture tex = make_texture(spec, min_u, max_u, min_v, max_v);
  std::vector<FrameFeatures> frames;
  frames.reserve(spec.n_frames);
  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    FrameFeatures f{t, spec.grid_h, spec.grid_w, Matrix(spec.grid_h * spec.grid_w, spec.dim)};
    for (std::size_t r = 0; r < f.tokens.rows(); ++r) {
      const auto& uv = coords[t * spec.grid_h * spec.grid_w + r];
      sample_texture(tex, uv[0], uv[1], f.tokens.row(r));
    }
    frames.push_back(std::move(f));
  }
  return SyntheticClip(spec, std::move(frames), std::move(motion));
}

}  // namespace anchorprop
