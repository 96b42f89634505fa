#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anchorprop/attention.hpp"
#include "anchorprop/network.hpp"
#include "anchorprop/tensor.hpp"

namespace anchorprop {

// Keys/values of all anchors at one (layer, step), rows concatenated in
// ascending anchor-frame order.
struct CacheEntry {
  Matrix k;
  Matrix v;
  // Tokens contributed by each anchor; 0 for an empty entry.
  std::size_t tokens_per_anchor = 0;
};

// Immutable after construction; safe to share across concurrent readers.
class AnchorCache {
 public:
  AnchorCache() = default;
  AnchorCache(std::vector<std::size_t> anchor_frames, std::size_t layers, std::size_t steps,
              std::uint64_t config_hash, std::vector<CacheEntry> entries);

  // A cache with no anchors whose entries are all zero-row; attention against
  // it reduces to self-attention.
  static AnchorCache empty_for(const ToyEditNetwork& network);

  std::size_t num_anchors() const { return anchor_frames_.size(); }
  const std::vector<std::size_t>& anchor_frame_indices() const { return anchor_frames_; }
  std::size_t layers() const { return layers_; }
  std::size_t steps() const { return steps_; }
  std::uint64_t config_hash() const { return config_hash_; }

  const CacheEntry& entry(std::size_t layer, std::size_t step) const;

  void save(const std::filesystem::path& dir) const;
  static AnchorCache load(const std::filesystem::path& dir);

 private:
  std::vector<std::size_t> anchor_frames_;
  std::size_t layers_ = 0;
  std::size_t steps_ = 0;
  std::uint64_t config_hash_ = 0;
  std::vector<CacheEntry> entries_;  // index: layer * steps + step
};

struct AnchorBatchResult {
  AnchorCache cache;
  // Final-layer outputs of the joint anchor pass, in ascending frame order.
  std::vector<FrameFeatures> edited;
};

// Uniformly spaced anchor frames: {floor(i (N-1) / (K-1))}, or the middle frame when K = 1.
std::vector<std::size_t> select_anchor_indices(std::size_t n_frames, std::size_t num_anchors);

// Runs the anchors jointly and records their keys/values at every (layer, step).
// Each anchor attends over [own; all anchors], so its own keys appear twice and
// its output equals edit_frame(anchor, network, &cache). Anchors are ordered by
// frame_index first, so the input order does not matter.
AnchorBatchResult run_anchor_batch(std::span<const FrameFeatures> anchors,
                                   const ToyEditNetwork& network);

AnchorCache build_anchor_cache(std::span<const FrameFeatures> anchors,
                               const ToyEditNetwork& network);

// softmax(Q [K; K_anc]^T / temperature) [V; V_anc], per head.
Matrix anchor_attention(const QKV& frame_qkv, const CacheEntry& entry, const AttentionConfig& cfg);

}  // namespace anchorprop
