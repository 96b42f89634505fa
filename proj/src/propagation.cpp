#include "anchorprop/propagation.hpp"

#include <algorithm>

#include "anchorprop/error.hpp"

namespace anchorprop {

std::string to_string(EditMode mode) {
  return mode == EditMode::kAnchored ? "anchored" : "independent";
}

EditMode parse_edit_mode(const std::string& text) {
  if (text == "anchored") return EditMode::kAnchored;
  if (text == "independent") return EditMode::kIndependent;
  throw ParameterError("unknown edit mode '" + text + "'");
}

FrameFeatures edit_frame(const FrameFeatures& frame, const ToyEditNetwork& network,
                         const AnchorCache* cache) {
  if (cache != nullptr) {
    if (cache->config_hash() != network.config_hash()) {
      throw CompatibilityError("edit_frame: anchor cache was built by a different network config");
    }
    if (cache->layers() != network.num_layers() || cache->steps() != network.steps()) {
      throw CompatibilityError("edit_frame: anchor cache layer/step grid does not match network");
    }
  }
  const auto& cfg = network.attention_config();
  auto site = [&](std::size_t layer, std::size_t step, std::span<const QKV> batch,
                  std::span<Matrix> outputs) {
    outputs[0] = cache == nullptr ? self_attention(batch[0], cfg)
                                  : anchor_attention(batch[0], cache->entry(layer, step), cfg);
  };
  auto finals = network.run(std::span(&frame, 1), site);
  return {frame.frame_index, network.config().grid_h, network.config().grid_w,
          std::move(finals.front())};
}

std::vector<FrameFeatures> gather_frames(std::span<const FrameFeatures> clip,
                                         std::span<const std::size_t> positions) {
  std::vector<FrameFeatures> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) {
    if (p >= clip.size()) throw BoundsError("frame position out of range");
    FrameFeatures f = clip[p];
    f.frame_index = p;
    out.push_back(std::move(f));
  }
  return out;
}

EditedVideo edit_video(std::span<const FrameFeatures> clip, const ToyEditNetwork& network,
                       EditMode mode, std::size_t num_anchors) {
  if (clip.empty()) throw ParameterError("edit_video: empty clip");
  EditedVideo video;
  video.mode = mode;
  video.provenance.config_hash = network.config_hash();
  video.provenance.network_seed = network.config().seed;
  video.frames.resize(clip.size());

  if (mode == EditMode::kIndependent) {
    for (std::size_t i = 0; i < clip.size(); ++i) {
      video.frames[i] = edit_frame(clip[i], network);
      video.frames[i].frame_index = i;
    }
    return video;
  }

  const std::size_t k = std::min(num_anchors, clip.size());
  const auto anchor_positions = select_anchor_indices(clip.size(), k);
  const auto anchors = gather_frames(clip, anchor_positions);
  auto batch = run_anchor_batch(anchors, network);
  video.provenance.num_anchors = anchor_positions.size();
  video.provenance.anchor_frames = anchor_positions;
  for (auto& f : batch.edited) video.frames[f.frame_index] = std::move(f);

  for (std::size_t i = 0; i < clip.size(); ++i) {
    if (std::binary_search(anchor_positions.begin(), anchor_positions.end(), i)) continue;
    video.frames[i] = edit_frame(clip[i], network, &batch.cache);
    video.frames[i].frame_index = i;
  }
  return video;
}

}  // namespace anchorprop
