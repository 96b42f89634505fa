#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "anchorprop/anchor.hpp"
#include "anchorprop/attention.hpp"
#include "anchorprop/network.hpp"

namespace anchorprop {

enum class EditMode { kIndependent, kAnchored };

std::string to_string(EditMode mode);
EditMode parse_edit_mode(const std::string& text);

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t network_seed = 0;
  std::size_t num_anchors = 0;
  std::vector<std::size_t> anchor_frames;
  std::size_t workers = 1;
};

struct EditedVideo {
  std::vector<FrameFeatures> frames;
  EditMode mode = EditMode::kIndependent;
  Provenance provenance;
};

// Edits one frame. Without a cache every attention site is self-attention;
// with one, site (l, t) attends over [own; cache.entry(l, t)].
FrameFeatures edit_frame(const FrameFeatures& frame, const ToyEditNetwork& network,
                         const AnchorCache* cache = nullptr);

// Serial reference pipeline. In anchored mode the anchor count is clamped to
// the clip length; anchor outputs come from the joint anchor pass.
EditedVideo edit_video(std::span<const FrameFeatures> clip, const ToyEditNetwork& network,
                       EditMode mode, std::size_t num_anchors = 3);

// Frames at the given positions, with frame_index set to the position.
std::vector<FrameFeatures> gather_frames(std::span<const FrameFeatures> clip,
                                         std::span<const std::size_t> positions);

}  // namespace anchorprop
