#pragma once

#include <cstddef>
#include <span>

#include "anchorprop/tensor.hpp"

namespace anchorprop {

// Token grid of one frame: grid_h * grid_w rows, one feature vector per row.
struct FrameFeatures {
  std::size_t frame_index = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  Matrix tokens;

  std::size_t dim() const { return tokens.cols(); }
  std::size_t token_count() const { return grid_h * grid_w; }
  void validate() const;
};

struct AttentionConfig {
  std::size_t num_heads = 1;
  std::size_t dim = 0;
  // Logits are divided by this; defaults to sqrt(head_dim).
  double temperature = 1.0;

  static AttentionConfig make(std::size_t dim, std::size_t num_heads);
  std::size_t head_dim() const { return dim / num_heads; }
  void validate() const;
};

struct QKV {
  Matrix q;
  Matrix k;
  Matrix v;

  std::size_t tokens() const { return q.rows(); }
};

struct ProjectionWeights {
  Matrix wq;
  Matrix wk;
  Matrix wv;
};

// Head-averaged, row-stochastic attention scores.
struct AttentionMap {
  Matrix scores;
};

// A contiguous run of keys with their values. Rows of k and v correspond.
struct KeyValueBlock {
  const Matrix* k = nullptr;
  const Matrix* v = nullptr;
};

QKV project_qkv(const FrameFeatures& frame, const ProjectionWeights& weights);

// Multi-head attention of q over the concatenation of blocks, in block order.
// Every public attention entry point reduces to this kernel so that equal key
// sets produce bit-identical outputs.
Matrix attend(const Matrix& q, std::span<const KeyValueBlock> blocks, const AttentionConfig& cfg);

Matrix self_attention(const QKV& qkv, const AttentionConfig& cfg);

// Keys/values: own (if include_self) first, then others in list order.
Matrix cross_frame_attention(const QKV& query_frame, std::span<const QKV> others,
                             const AttentionConfig& cfg, bool include_self);

AttentionMap head_avg_attention_map(const QKV& q_frame, const QKV& k_frame,
                                    const AttentionConfig& cfg);

// Per-head softmax(Q_h K_h^T / temperature), before averaging.
Matrix head_attention_map(const QKV& q_frame, const QKV& k_frame, const AttentionConfig& cfg,
                          std::size_t head);

}  // namespace anchorprop
