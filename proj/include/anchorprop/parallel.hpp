#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "anchorprop/network.hpp"
#include "anchorprop/propagation.hpp"

namespace anchorprop {

// Half-open run [first, last) into SegmentPlan::frames.
struct Segment {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first; }
};

struct SegmentPlan {
  std::size_t n_frames = 0;
  std::size_t n_workers = 0;
  // Non-anchor frame indices in ascending order.
  std::vector<std::size_t> frames;
  // One segment per worker, contiguous over `frames`; sizes differ by at most 1.
  std::vector<Segment> segments;
};

SegmentPlan partition_segments(std::size_t n_frames, std::size_t n_workers,
                               std::span<const std::size_t> anchor_indices);

// Anchored editing with non-anchor frames spread over n_workers OpenMP
// threads. Output is bit-identical to edit_video(..., kAnchored, ...) for any
// worker count.
EditedVideo run_parallel(std::span<const FrameFeatures> clip, const ToyEditNetwork& network,
                         std::size_t num_anchors, std::size_t n_workers);

// Independent-mode editing spread over n_workers threads; bit-identical to
// the serial edit_video(..., kIndependent).
EditedVideo run_parallel_independent(std::span<const FrameFeatures> clip,
                                     const ToyEditNetwork& network, std::size_t n_workers);

}  // namespace anchorprop
