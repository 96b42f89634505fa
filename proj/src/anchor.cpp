#include "anchorprop/anchor.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

#include <nlohmann/json.hpp>

#include "anchorprop/container.hpp"
#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

std::string entry_name(char kind, std::size_t layer, std::size_t step) {
  return std::string(1, kind) + "_l" + std::to_string(layer) + "_t" + std::to_string(step) + ".apft";
}

}  // namespace

AnchorCache::AnchorCache(std::vector<std::size_t> anchor_frames, std::size_t layers,
                         std::size_t steps, std::uint64_t config_hash,
                         std::vector<CacheEntry> entries)
    : anchor_frames_(std::move(anchor_frames)),
      layers_(layers),
      steps_(steps),
      config_hash_(config_hash),
      entries_(std::move(entries)) {
  if (entries_.size() != layers_ * steps_) {
    throw ShapeError("anchor cache: expected " + std::to_string(layers_ * steps_) + " entries, got " +
                     std::to_string(entries_.size()));
  }
  for (std::size_t i = 1; i < anchor_frames_.size(); ++i) {
    if (anchor_frames_[i] <= anchor_frames_[i - 1]) {
      throw ParameterError("anchor cache: anchor frame indices must be strictly increasing");
    }
  }
  for (const auto& e : entries_) {
    if (e.k.rows() != e.v.rows()) throw ShapeError("anchor cache: key/value row mismatch");
    if (e.k.rows() != e.tokens_per_anchor * anchor_frames_.size()) {
      throw ShapeError("anchor cache: entry rows do not equal anchors x tokens");
    }
  }
}

AnchorCache AnchorCache::empty_for(const ToyEditNetwork& network) {
  std::vector<CacheEntry> entries(network.num_layers() * network.steps());
  for (auto& e : entries) {
    e.k = Matrix(0, network.config().dim);
    e.v = Matrix(0, network.config().dim);
  }
  return AnchorCache({}, network.num_layers(), network.steps(), network.config_hash(),
                     std::move(entries));
}

const CacheEntry& AnchorCache::entry(std::size_t layer, std::size_t step) const {
  if (layer >= layers_ || step >= steps_) {
    throw BoundsError("anchor cache: no entry for layer " + std::to_string(layer) + ", step " +
                      std::to_string(step));
  }
  return entries_[layer * steps_ + step];
}

void AnchorCache::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["anchor_frames"] = anchor_frames_;
  meta["layers"] = layers_;
  meta["steps"] = steps_;
  meta["config_hash"] = config_hash_;
  std::ofstream(dir / "cache.json") << meta.dump(2) << '\n';
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t t = 0; t < steps_; ++t) {
      const auto& e = entry(l, t);
      save_tensor(dir / entry_name('k', l, t), matrix_to_tensor(e.k));
      save_tensor(dir / entry_name('v', l, t), matrix_to_tensor(e.v));
    }
  }
}

AnchorCache AnchorCache::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cache.json");
  if (!in) throw Error("anchor cache: missing " + (dir / "cache.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("anchor cache: ") + e.what());
  }
  const auto layers = meta.at("layers").get<std::size_t>();
  const auto steps = meta.at("steps").get<std::size_t>();
  const auto anchors = meta.at("anchor_frames").size();
  std::vector<CacheEntry> entries;
  entries.reserve(layers * steps);
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t t = 0; t < steps; ++t) {
      CacheEntry e{tensor_to_matrix(load_tensor(dir / entry_name('k', l, t))),
                   tensor_to_matrix(load_tensor(dir / entry_name('v', l, t))), 0};
      if (anchors != 0) e.tokens_per_anchor = e.k.rows() / anchors;
      entries.push_back(std::move(e));
    }
  }
  return AnchorCache(meta.at("anchor_frames").get<std::vector<std::size_t>>(), layers, steps,
                     meta.at("config_hash").get<std::uint64_t>(), std::move(entries));
}

std::vector<std::size_t> select_anchor_indices(std::size_t n_frames, std::size_t num_anchors) {
  if (num_anchors == 0 || num_anchors > n_frames) {
    throw ParameterError("select_anchor_indices: need 1 <= K <= N, got K=" +
                         std::to_string(num_anchors) + ", N=" + std::to_string(n_frames));
  }
  if (num_anchors == 1) return {(n_frames - 1) / 2};
  std::vector<std::size_t> out;
  out.reserve(num_anchors);
  for (std::size_t i = 0; i < num_anchors; ++i) {
    const std::size_t idx = i * (n_frames - 1) / (num_anchors - 1);
    if (out.empty() || out.back() != idx) out.push_back(idx);
  }
  return out;
}

AnchorBatchResult run_anchor_batch(std::span<const FrameFeatures> anchors,
                                   const ToyEditNetwork& network) {
  if (anchors.empty()) throw ParameterError("build_anchor_cache: no anchor frames");
  std::vector<FrameFeatures> sorted(anchors.begin(), anchors.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
  std::vector<std::size_t> indices;
  for (const auto& f : sorted) indices.push_back(f.frame_index);

  const std::size_t n_layers = network.num_layers();
  const std::size_t n_steps = network.steps();
  std::vector<CacheEntry> entries(n_layers * n_steps);
  const auto& cfg = network.attention_config();

  // Every anchor attends to [own; all anchors], exactly the context
  // anchor_attention gives it against the finished cache.
  auto site = [&](std::size_t layer, std::size_t step, std::span<const QKV> batch,
                  std::span<Matrix> outputs) {
    std::vector<const Matrix*> ks, vs;
    for (const auto& q : batch) {
      ks.push_back(&q.k);
      vs.push_back(&q.v);
    }
    auto& entry = entries[layer * n_steps + step];
    entry = {vstack(ks), vstack(vs), batch.front().k.rows()};
    for (std::size_t b = 0; b < batch.size(); ++b) outputs[b] = anchor_attention(batch[b], entry, cfg);
  };

  auto finals = network.run(sorted, site);
  AnchorBatchResult result{
      AnchorCache(indices, n_layers, n_steps, network.config_hash(), std::move(entries)), {}};
  const auto& ncfg = network.config();
  for (std::size_t b = 0; b < sorted.size(); ++b) {
    result.edited.push_back({sorted[b].frame_index, ncfg.grid_h, ncfg.grid_w, std::move(finals[b])});
  }
  return result;
}

AnchorCache build_anchor_cache(std::span<const FrameFeatures> anchors,
                               const ToyEditNetwork& network) {
  return run_anchor_batch(anchors, network).cache;
}

Matrix anchor_attention(const QKV& frame_qkv, const CacheEntry& entry, const AttentionConfig& cfg) {
  if (entry.k.rows() != 0 && entry.tokens_per_anchor != frame_qkv.k.rows()) {
    throw ShapeError("anchor_attention: cache entry holds " +
                     std::to_string(entry.tokens_per_anchor) + " tokens per anchor, frame has " +
                     std::to_string(frame_qkv.k.rows()));
  }
  const KeyValueBlock blocks[2] = {{&frame_qkv.k, &frame_qkv.v}, {&entry.k, &entry.v}};
  return attend(frame_qkv.q, blocks, cfg);
}

}  // namespace anchorprop
