#include "anchorprop/network.hpp"

#include <bit>
#include <cmath>
#include <random>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

enum class WeightKind : std::uint64_t { kQueryKey = 1, kValue = 2, kOutput = 3, kBias = 4 };

std::uint64_t weight_seed(std::uint64_t seed, std::size_t layer, WeightKind kind) {
  return mix_seed(mix_seed(seed, layer + 1), static_cast<std::uint64_t>(kind));
}

void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t hash_config(const NetworkConfig& cfg) {
  std::vector<unsigned char> bytes;
  append_u64(bytes, cfg.grid_h);
  append_u64(bytes, cfg.grid_w);
  append_u64(bytes, cfg.dim);
  append_u64(bytes, cfg.num_heads);
  append_u64(bytes, cfg.pyramid.size());
  for (auto f : cfg.pyramid) append_u64(bytes, f);
  append_u64(bytes, cfg.steps);
  append_u64(bytes, cfg.seed);
  for (float g : {cfg.match_gain, cfg.residual_gain, cfg.edit_strength, cfg.edit_variance, cfg.skip_gain}) {
    append_u64(bytes, std::bit_cast<std::uint32_t>(g));
  }
  return fnv1a(bytes);
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

bool adjacent_ok(std::size_t a, std::size_t b) { return a == b || a == 2 * b || b == 2 * a; }

Matrix scaled(const Matrix& m, float gain) {
  Matrix out = m;
  for (float& v : out.values()) v *= gain;
  return out;
}

}  // namespace

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void NetworkConfig::validate() const {
  if (grid_h == 0 || grid_w == 0) throw ParameterError("network: empty input grid");
  if (dim == 0 || num_heads == 0 || dim % num_heads != 0) {
    throw ParameterError("network: dim must be a positive multiple of num_heads");
  }
  if (steps == 0) throw ParameterError("network: steps must be >= 1");
  if (pyramid.empty()) throw ParameterError("network: no layers");
  std::size_t prev = 1;
  for (std::size_t f : pyramid) {
    if (!is_power_of_two(f) || grid_h % f != 0 || grid_w % f != 0) {
      throw ParameterError("network: downsample factor " + std::to_string(f) +
                           " does not divide the input grid");
    }
    if (!adjacent_ok(prev, f)) {
      throw ParameterError("network: adjacent layers must halve, double or keep resolution");
    }
    prev = f;
  }
  if (pyramid.back() != 1) throw ParameterError("network: last layer must be full resolution");
  for (float g : {match_gain, residual_gain, edit_strength, edit_variance, skip_gain}) {
    if (!std::isfinite(g) || g < 0.0f) throw ParameterError("network: gains must be finite and >= 0");
  }
}

Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> a(n * n);
  for (double& x : a) x = normal(rng);
  // Columns j of the row-major buffer are orthonormalised in order.
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += a[i * n + j] * a[i * n + p];
      for (std::size_t i = 0; i < n; ++i) a[i * n + j] -= dot * a[i * n + p];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += a[i * n + j] * a[i * n + j];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) a[i * n + j] /= norm;
  }
  Matrix m(n, n);
  for (std::size_t i = 0; i < n * n; ++i) m.values()[i] = static_cast<float>(a[i]);
  return m;
}

Matrix resample_tokens(const Matrix& tokens, std::size_t from_h, std::size_t from_w,
                       std::size_t to_h, std::size_t to_w) {
  if (tokens.rows() != from_h * from_w) throw ShapeError("resample: token count mismatch");
  const std::size_t d = tokens.cols();
  if (to_h == from_h && to_w == from_w) return tokens;
  Matrix out(to_h * to_w, d);
  if (to_h * 2 == from_h && to_w * 2 == from_w) {
    std::vector<double> acc(d);
    for (std::size_t y = 0; y < to_h; ++y) {
      for (std::size_t x = 0; x < to_w; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            auto src = tokens.row((2 * y + dy) * from_w + 2 * x + dx);
            for (std::size_t c = 0; c < d; ++c) acc[c] += src[c];
          }
        }
        auto dst = out.row(y * to_w + x);
        for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<float>(acc[c] * 0.25);
      }
    }
    return out;
  }
  if (to_h == from_h * 2 && to_w == from_w * 2) {
    for (std::size_t y = 0; y < to_h; ++y) {
      for (std::size_t x = 0; x < to_w; ++x) {
        auto src = tokens.row((y / 2) * from_w + x / 2);
        std::copy(src.begin(), src.end(), out.row(y * to_w + x).begin());
      }
    }
    return out;
  }
  throw ShapeError("resample: unsupported ratio " + std::to_string(from_h) + "x" +
                   std::to_string(from_w) + " -> " + std::to_string(to_h) + "x" +
                   std::to_string(to_w));
}

Matrix rms_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    double ss = 0.0;
    for (float v : in) ss += static_cast<double>(v) * v;
    const double rms = std::sqrt(ss / static_cast<double>(in.size()));
    auto o = out.row(r);
    if (rms <= 1e-12) {
      std::fill(o.begin(), o.end(), 0.0f);
      continue;
    }
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = static_cast<float>(in[c] / rms);
  }
  return out;
}

ToyEditNetwork::ToyEditNetwork(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  attn_ = AttentionConfig::make(cfg_.dim, cfg_.num_heads);
  hash_ = hash_config(cfg_);
  layers_.reserve(cfg_.pyramid.size());
  for (std::size_t l = 0; l < cfg_.pyramid.size(); ++l) {
    LayerWeights w;
    w.grid_h = cfg_.layer_grid_h(l);
    w.grid_w = cfg_.layer_grid_w(l);
    Matrix qk = random_orthogonal(cfg_.dim, weight_seed(cfg_.seed, l, WeightKind::kQueryKey));
    for (float& v : qk.values()) v *= cfg_.match_gain;
    // Tied query/key projections make the logits a content-similarity score.
    w.qkv.wq = qk;
    w.qkv.wk = qk;
    w.qkv.wv = random_orthogonal(cfg_.dim, weight_seed(cfg_.seed, l, WeightKind::kValue));
    w.wo = random_orthogonal(cfg_.dim, weight_seed(cfg_.seed, l, WeightKind::kOutput));
    std::mt19937_64 rng(weight_seed(cfg_.seed, l, WeightKind::kBias));
    std::normal_distribution<double> normal(0.0, 1.0);
    w.edit_bias.resize(cfg_.dim);
    for (float& b : w.edit_bias) b = static_cast<float>(cfg_.edit_strength * normal(rng));
    layers_.push_back(std::move(w));
  }
}

void ToyEditNetwork::check_input(const FrameFeatures& frame) const {
  frame.validate();
  if (frame.grid_h != cfg_.grid_h || frame.grid_w != cfg_.grid_w || frame.dim() != cfg_.dim) {
    throw ShapeError("network: frame " + std::to_string(frame.frame_index) + " is " +
                     std::to_string(frame.grid_h) + "x" + std::to_string(frame.grid_w) + "x" +
                     std::to_string(frame.dim()) + ", network expects " +
                     std::to_string(cfg_.grid_h) + "x" + std::to_string(cfg_.grid_w) + "x" +
                     std::to_string(cfg_.dim));
  }
}

Matrix ToyEditNetwork::prepare_input(const FrameFeatures& frame) const {
  check_input(frame);
  return rms_normalize_rows(frame.tokens);
}

std::uint64_t ToyEditNetwork::variation_seed(const FrameFeatures& frame) const {
  auto vals = frame.tokens.values();
  std::span<const unsigned char> bytes(reinterpret_cast<const unsigned char*>(vals.data()),
                                       vals.size_bytes());
  return mix_seed(fnv1a(bytes), cfg_.seed);
}

std::vector<float> ToyEditNetwork::value_offset(std::size_t layer, std::size_t step,
                                                std::uint64_t variation_seed) const {
  const auto& bias = layers_.at(layer).edit_bias;
  std::vector<float> out(bias.begin(), bias.end());
  if (cfg_.edit_variance == 0.0f) return out;
  std::mt19937_64 rng(mix_seed(mix_seed(variation_seed, layer), step));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (float& o : out) o = static_cast<float>(o + cfg_.edit_variance * normal(rng));
  return out;
}

QKV ToyEditNetwork::project(const Matrix& x, std::size_t layer, std::size_t step,
                            std::uint64_t variation_seed) const {
  const auto& w = layers_.at(layer);
  QKV qkv{matmul(x, w.qkv.wq), matmul(x, w.qkv.wk), matmul(x, w.qkv.wv)};
  const auto offset = value_offset(layer, step, variation_seed);
  for (std::size_t r = 0; r < qkv.v.rows(); ++r) {
    auto row = qkv.v.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += offset[c];
  }
  return qkv;
}

Matrix ToyEditNetwork::finish_layer(const Matrix& x, const Matrix& attention_out,
                                    std::size_t layer) const {
  if (attention_out.rows() != x.rows() || attention_out.cols() != x.cols()) {
    throw ShapeError("network: attention output shape mismatch at layer " + std::to_string(layer));
  }
  Matrix branch = matmul(attention_out, layers_.at(layer).wo);
  const float gain = cfg_.residual_gain;
  auto xv = x.values();
  auto bv = branch.values();
  for (std::size_t i = 0; i < bv.size(); ++i) bv[i] = std::tanh(xv[i] + gain * bv[i]);
  return rms_normalize_rows(branch);
}

std::size_t ToyEditNetwork::input_grid_h(std::size_t layer) const {
  return layer == 0 ? cfg_.grid_h : layers_.at(layer - 1).grid_h;
}

std::size_t ToyEditNetwork::input_grid_w(std::size_t layer) const {
  return layer == 0 ? cfg_.grid_w : layers_.at(layer - 1).grid_w;
}

std::vector<Matrix> ToyEditNetwork::run(std::span<const FrameFeatures> frames,
                                        const AttentionSite& site) const {
  const std::size_t batch = frames.size();
  std::vector<Matrix> input(batch);
  std::vector<std::uint64_t> seeds(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    input[b] = prepare_input(frames[b]);
    seeds[b] = variation_seed(frames[b]);
  }
  std::vector<Matrix> x = input;
  std::vector<QKV> qkv(batch);
  std::vector<Matrix> attn(batch);
  // skips[l][b]: output of layer l, added back when a later layer upsamples to its grid.
  std::vector<std::vector<Matrix>> skips(layers_.size());
  for (std::size_t t = 0; t < cfg_.steps; ++t) {
    if (t > 0) {
      // Every step is conditioned on the source frame again.
      for (std::size_t b = 0; b < batch; ++b) x[b] = rms_normalize_rows(add(input[b], x[b]));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& w = layers_[l];
      const std::size_t from_h = input_grid_h(l);
      const bool upsample = w.grid_h > from_h;
      const std::size_t skip = upsample ? skip_source(l) : layers_.size();
      for (std::size_t b = 0; b < batch; ++b) {
        x[b] = resample_tokens(x[b], from_h, input_grid_w(l), w.grid_h, w.grid_w);
        if (skip < layers_.size()) x[b] = rms_normalize_rows(add(x[b], scaled(skips[skip][b], cfg_.skip_gain)));
        qkv[b] = project(x[b], l, t, seeds[b]);
      }
      site(l, t, qkv, attn);
      for (std::size_t b = 0; b < batch; ++b) x[b] = finish_layer(x[b], attn[b], l);
      skips[l] = x;
    }
  }
  return x;
}

std::size_t ToyEditNetwork::skip_source(std::size_t layer) const {
  // Most recent earlier layer at the target resolution that fed a downsample.
  const std::size_t h = layers_.at(layer).grid_h;
  for (std::size_t s = layer; s-- > 0;) {
    if (layers_[s].grid_h == h && s + 1 < layers_.size() && layers_[s + 1].grid_h < h) return s;
  }
  return layers_.size();
}

}  // namespace anchorprop
