#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anchorprop/attention.hpp"
#include "anchorprop/network.hpp"
#include "anchorprop/synthdata.hpp"

namespace anchorprop {

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

struct TrackQuery {
  PixelPoint point;
  std::size_t source_frame = 0;
  std::size_t target_frame = 0;
};

struct TrackResult {
  PixelPoint point;
  std::size_t token_index = 0;
  float score = 0.0f;
};

struct EvalConfig {
  std::size_t image_size = 256;
  std::vector<double> thresholds = {16.0, 32.0};
  // Empty means every layer / every step of the network.
  std::vector<std::size_t> layers;
  std::vector<std::size_t> steps;
  // Upper bound on query points per axis. Queries sit on the input-grid token
  // centres closest to the centres of the coarsest evaluated layer's tokens.
  std::size_t query_grid = 16;
  // Frame pairs: every (t, t + 1) plus (t, t + pair_stride) for t a multiple of pair_stride.
  std::size_t pair_stride = 4;
};

// Token containing (x, y) on an h x w grid covering image_size pixels.
std::size_t pixel_to_token(PixelPoint p, std::size_t grid_h, std::size_t grid_w,
                           std::size_t image_size);
PixelPoint token_center(std::size_t token, std::size_t grid_h, std::size_t grid_w,
                        std::size_t image_size);

// Argmax over one attention row; ties go to the lowest index.
std::size_t argmax_row(std::span<const float> row);

TrackResult track_point(const TrackQuery& query, const AttentionMap& map, std::size_t grid_h,
                        std::size_t grid_w, std::size_t image_size);

struct PredictionPair {
  PixelPoint predicted;
  PixelPoint truth;
};

// Fraction of pairs whose Euclidean error is <= delta.
double position_accuracy(std::span<const PredictionPair> predictions, double delta);

struct AccuracyCell {
  std::size_t layer = 0;
  std::size_t step = 0;
  double delta = 0.0;
  double accuracy = 0.0;
  std::size_t n_points = 0;
};

struct AccuracyTable {
  std::vector<AccuracyCell> cells;

  const AccuracyCell& at(std::size_t layer, std::size_t step, double delta) const;
  std::string to_csv() const;
};

std::vector<std::pair<std::size_t, std::size_t>> tracking_pairs(std::size_t n_frames,
                                                                std::size_t pair_stride);

// Runs every frame through the network on its own, then tracks a grid of query
// points between frame pairs using head-averaged attention at each (layer, step).
// Points whose ground truth leaves the target frame are not counted.
AccuracyTable evaluate_tracking(const SyntheticClip& clip, const ToyEditNetwork& network,
                                const EvalConfig& cfg);

}  // namespace anchorprop
