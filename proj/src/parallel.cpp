#include "anchorprop/parallel.hpp"

#include <algorithm>
#include <exception>
#include <string>

#include "anchorprop/anchor.hpp"
#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

struct SegmentFailure {
  bool failed = false;
  std::string message;
};

// Runs `body(frame)` for every frame of every segment, one OpenMP thread per
// segment. Each thread writes only the output slots of its own segment.
template <typename Body>
void for_each_segment(const SegmentPlan& plan, Body&& body) {
  const auto n_seg = static_cast<long>(plan.segments.size());
  std::vector<SegmentFailure> failures(plan.segments.size());
#pragma omp parallel for num_threads(static_cast<int>(plan.n_workers)) schedule(static, 1)
  for (long s = 0; s < n_seg; ++s) {
    const Segment seg = plan.segments[static_cast<std::size_t>(s)];
    try {
      for (std::size_t i = seg.first; i < seg.last; ++i) body(plan.frames[i]);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(s)] = {true, e.what()};
    } catch (...) {
      failures[static_cast<std::size_t>(s)] = {true, "unknown error"};
    }
  }
  for (std::size_t s = 0; s < failures.size(); ++s) {
    if (!failures[s].failed) continue;
    const Segment seg = plan.segments[s];
    throw JobError("segment " + std::to_string(s) + " (frames " +
                   std::to_string(plan.frames[seg.first]) + ".." +
                   std::to_string(plan.frames[seg.last - 1]) + ") failed: " + failures[s].message);
  }
}

}  // namespace

SegmentPlan partition_segments(std::size_t n_frames, std::size_t n_workers,
                               std::span<const std::size_t> anchor_indices) {
  if (n_workers == 0) throw ParameterError("partition_segments: n_workers must be >= 1");
  for (std::size_t a : anchor_indices) {
    if (a >= n_frames) throw BoundsError("partition_segments: anchor index out of range");
  }
  SegmentPlan plan;
  plan.n_frames = n_frames;
  plan.n_workers = n_workers;
  for (std::size_t i = 0; i < n_frames; ++i) {
    if (std::find(anchor_indices.begin(), anchor_indices.end(), i) == anchor_indices.end()) {
      plan.frames.push_back(i);
    }
  }
  const std::size_t base = plan.frames.size() / n_workers;
  const std::size_t extra = plan.frames.size() % n_workers;
  std::size_t cursor = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    plan.segments.push_back({cursor, cursor + len});
    cursor += len;
  }
  return plan;
}

EditedVideo run_parallel(std::span<const FrameFeatures> clip, const ToyEditNetwork& network,
                         std::size_t num_anchors, std::size_t n_workers) {
  if (clip.empty()) throw ParameterError("run_parallel: empty clip");
  if (n_workers == 0) throw ParameterError("run_parallel: n_workers must be >= 1");
  EditedVideo video;
  video.mode = EditMode::kAnchored;
  video.frames.resize(clip.size());
  video.provenance.config_hash = network.config_hash();
  video.provenance.network_seed = network.config().seed;
  video.provenance.workers = n_workers;

  const std::size_t k = std::min(num_anchors, clip.size());
  const auto anchor_positions = select_anchor_indices(clip.size(), k);
  auto batch = run_anchor_batch(gather_frames(clip, anchor_positions), network);
  video.provenance.num_anchors = anchor_positions.size();
  video.provenance.anchor_frames = anchor_positions;
  for (auto& f : batch.edited) video.frames[f.frame_index] = std::move(f);

  const AnchorCache& cache = batch.cache;
  const auto plan = partition_segments(clip.size(), n_workers, anchor_positions);
  for_each_segment(plan, [&](std::size_t i) {
    video.frames[i] = edit_frame(clip[i], network, &cache);
    video.frames[i].frame_index = i;
  });
  return video;
}

EditedVideo run_parallel_independent(std::span<const FrameFeatures> clip,
                                     const ToyEditNetwork& network, std::size_t n_workers) {
  if (clip.empty()) throw ParameterError("run_parallel: empty clip");
  EditedVideo video;
  video.mode = EditMode::kIndependent;
  video.frames.resize(clip.size());
  video.provenance.config_hash = network.config_hash();
  video.provenance.network_seed = network.config().seed;
  video.provenance.workers = n_workers;
  const auto plan = partition_segments(clip.size(), n_workers, {});
  for_each_segment(plan, [&](std::size_t i) {
    video.frames[i] = edit_frame(clip[i], network);
    video.frames[i].frame_index = i;
  });
  return video;
}

}  // namespace anchorprop
