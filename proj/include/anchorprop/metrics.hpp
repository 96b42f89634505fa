#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anchorprop/attention.hpp"
#include "anchorprop/equivariance.hpp"
#include "anchorprop/tensor.hpp"

namespace anchorprop {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<float> embed(const FrameFeatures& frame) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;
};

// Mean-pools tokens globally and over a 2x2 spatial split, then applies a
// seeded Gaussian projection. Linear, so positively homogeneous in the input.
class ToyEmbedder final : public Embedder {
 public:
  ToyEmbedder(std::size_t feature_dim, std::size_t out_dim = 128, std::uint64_t seed = 0);

  std::vector<float> embed(const FrameFeatures& frame) const override;
  std::size_t dim() const override { return projection_.cols(); }
  std::string name() const override { return "toy"; }

 private:
  Matrix projection_;  // (5 * feature_dim) x out_dim
};

// Looks up row frame_index of an (N, D) embedding table, e.g. one produced by
// an external model.
class PrecomputedEmbedder final : public Embedder {
 public:
  explicit PrecomputedEmbedder(Matrix table);
  static PrecomputedEmbedder load(const std::filesystem::path& path);

  std::vector<float> embed(const FrameFeatures& frame) const override;
  std::size_t dim() const override { return table_.cols(); }
  std::string name() const override { return "precomputed"; }

 private:
  Matrix table_;
};

// Image as a frame whose tokens are pixels and whose features are channels.
FrameFeatures image_as_frame(const Image& img, std::size_t frame_index = 0);

struct MetricsReport {
  double tem_con = 0.0;
  std::vector<double> pair_similarities;
  // Only set when reference embeddings were given.
  bool has_frame_acc = false;
  double frame_acc = 0.0;
  std::size_t frames = 0;
  std::string embedder;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
std::string pair_similarities_csv(const MetricsReport& r);

// Cosine similarity of each successive embedding pair, in order.
std::vector<double> adjacent_similarities(std::span<const FrameFeatures> frames, const Embedder& emb);

// Mean cosine similarity of successive frame embeddings.
double tem_con(std::span<const FrameFeatures> frames, const Embedder& emb);

// Fraction of frames strictly closer (cosine) to target_ref than to source_ref.
double frame_acc(std::span<const FrameFeatures> frames, const Embedder& emb,
                 std::span<const float> source_ref, std::span<const float> target_ref);

MetricsReport compute_metrics(std::span<const FrameFeatures> frames, const Embedder& emb,
                              std::span<const float> source_ref = {},
                              std::span<const float> target_ref = {});

}  // namespace anchorprop
