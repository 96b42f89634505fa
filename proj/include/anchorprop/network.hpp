#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "anchorprop/attention.hpp"
#include "anchorprop/tensor.hpp"

namespace anchorprop {

struct NetworkConfig {
  std::size_t grid_h = 32;
  std::size_t grid_w = 32;
  std::size_t dim = 64;
  std::size_t num_heads = 2;
  // Downsample factor of each attention layer relative to the input grid.
  // Adjacent layers differ by at most a factor of two; the last must be 1.
  std::vector<std::size_t> pyramid = {1, 2, 4, 2, 1};
  std::size_t steps = 10;
  std::uint64_t seed = 0;
  // Scale of the tied query/key projections; sharpens content matching.
  float match_gain = 1.25f;
  // Weight of the attention branch in each residual update.
  float residual_gain = 0.5f;
  // Per-component std of the seeded value offset that stands in for the edit instruction.
  float edit_strength = 0.5f;
  // Per-component std of the content-seeded value offset that makes edits vary
  // between frames whose inputs differ.
  float edit_variance = 0.3f;
  // Weight of the encoder activation added back when a layer upsamples.
  float skip_gain = 4.0f;

  void validate() const;
  std::size_t layer_grid_h(std::size_t layer) const { return grid_h / pyramid.at(layer); }
  std::size_t layer_grid_w(std::size_t layer) const { return grid_w / pyramid.at(layer); }
};

struct LayerWeights {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  ProjectionWeights qkv;
  Matrix wo;
  std::vector<float> edit_bias;
};

// Computes attention outputs for every frame of a batch at one (layer, step)
// site. outputs[b] must be filled with a (tokens x dim) matrix for batch[b].
using AttentionSite = std::function<void(std::size_t layer, std::size_t step,
                                         std::span<const QKV> batch, std::span<Matrix> outputs)>;

// Seeded stand-in for a layered image-editing model: a resolution pyramid of
// attention blocks with skip connections, iterated for a fixed number of
// refinement steps that each see the source frame again.
class ToyEditNetwork {
 public:
  explicit ToyEditNetwork(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }
  std::uint64_t config_hash() const { return hash_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t steps() const { return cfg_.steps; }
  const LayerWeights& layer(std::size_t l) const { return layers_.at(l); }
  const AttentionConfig& attention_config() const { return attn_; }

  // Token-wise RMS normalisation of the raw input; zero tokens stay zero.
  Matrix prepare_input(const FrameFeatures& frame) const;

  // Seed of the per-frame edit variation; depends only on input content.
  std::uint64_t variation_seed(const FrameFeatures& frame) const;

  // Edit offset added to every value row at (layer, step).
  std::vector<float> value_offset(std::size_t layer, std::size_t step,
                                  std::uint64_t variation_seed) const;

  QKV project(const Matrix& x, std::size_t layer, std::size_t step,
              std::uint64_t variation_seed) const;

  // Residual update followed by tanh and token-wise RMS normalisation.
  Matrix finish_layer(const Matrix& x, const Matrix& attention_out, std::size_t layer) const;

  // Grid of the tensor entering `layer` (the previous layer's grid, or the input grid).
  std::size_t input_grid_h(std::size_t layer) const;
  std::size_t input_grid_w(std::size_t layer) const;

  // Runs all steps x layers over a batch, delegating attention to `site`.
  // Returns final-layer token matrices in batch order.
  std::vector<Matrix> run(std::span<const FrameFeatures> frames, const AttentionSite& site) const;

  void check_input(const FrameFeatures& frame) const;

  // Layer whose output is added back when `layer` upsamples (U-Net skip), or
  // num_layers() when there is none.
  std::size_t skip_source(std::size_t layer) const;

 private:
  NetworkConfig cfg_;
  AttentionConfig attn_;
  std::vector<LayerWeights> layers_;
  std::uint64_t hash_ = 0;
};

// Mean-pools by 2x2, duplicates by nearest neighbour, or copies, depending on
// the grid ratio. Other ratios are rejected.
Matrix resample_tokens(const Matrix& tokens, std::size_t from_h, std::size_t from_w,
                       std::size_t to_h, std::size_t to_w);

Matrix rms_normalize_rows(const Matrix& m);

// Seeded random orthogonal matrix (modified Gram-Schmidt on a Gaussian draw).
Matrix random_orthogonal(std::size_t n, std::uint64_t seed);

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace anchorprop
