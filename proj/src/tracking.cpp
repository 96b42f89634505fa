#include "anchorprop/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

// Queries and keys of one frame at the evaluated (layer, step) cells.
struct FrameTrace {
  std::vector<QKV> cells;  // index: layer slot * n_steps + step slot
};

FrameTrace trace_frame(const FrameFeatures& frame, const ToyEditNetwork& network,
                       std::span<const std::size_t> layers, std::span<const std::size_t> steps) {
  FrameTrace trace;
  trace.cells.resize(layers.size() * steps.size());
  const auto& cfg = network.attention_config();
  auto site = [&](std::size_t layer, std::size_t step, std::span<const QKV> batch,
                  std::span<Matrix> outputs) {
    auto li = std::find(layers.begin(), layers.end(), layer);
    auto si = std::find(steps.begin(), steps.end(), step);
    if (li != layers.end() && si != steps.end()) {
      const auto slot = static_cast<std::size_t>(li - layers.begin()) * steps.size() +
                        static_cast<std::size_t>(si - steps.begin());
      trace.cells[slot] = {batch[0].q, batch[0].k, Matrix()};
    }
    outputs[0] = self_attention(batch[0], cfg);
  };
  network.run(std::span(&frame, 1), site);
  return trace;
}

std::vector<std::size_t> all_up_to(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

QKV select_rows(const QKV& src, std::span<const std::size_t> rows) {
  Matrix q(rows.size(), src.q.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto s = src.q.row(rows[r]);
    std::copy(s.begin(), s.end(), q.row(r).begin());
  }
  return {std::move(q), Matrix(), Matrix()};
}

// Token indices along one axis of length n: the one or two tokens nearest the
// centre of each block of `factor` tokens, thinned evenly to at most `limit`.
std::vector<std::size_t> query_axis(std::size_t n, std::size_t factor, std::size_t limit) {
  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = i % factor;
    if (factor == 1 || m == factor / 2 - 1 || m == factor / 2) all.push_back(i);
  }
  if (all.size() <= limit) return all;
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < limit; ++k) picked.push_back(all[(2 * k + 1) * all.size() / (2 * limit)]);
  return picked;
}

}  // namespace

std::size_t pixel_to_token(PixelPoint p, std::size_t grid_h, std::size_t grid_w,
                           std::size_t image_size) {
  const auto size = static_cast<double>(image_size);
  if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < size && p.y < size)) {
    throw BoundsError("track: point outside the image");
  }
  const double sx = size / static_cast<double>(grid_w);
  const double sy = size / static_cast<double>(grid_h);
  const auto tx = std::min(static_cast<std::size_t>(std::floor(p.x / sx)), grid_w - 1);
  const auto ty = std::min(static_cast<std::size_t>(std::floor(p.y / sy)), grid_h - 1);
  return ty * grid_w + tx;
}

PixelPoint token_center(std::size_t token, std::size_t grid_h, std::size_t grid_w,
                        std::size_t image_size) {
  const double sx = static_cast<double>(image_size) / static_cast<double>(grid_w);
  const double sy = static_cast<double>(image_size) / static_cast<double>(grid_h);
  return {(static_cast<double>(token % grid_w) + 0.5) * sx,
          (static_cast<double>(token / grid_w) + 0.5) * sy};
}

std::size_t argmax_row(std::span<const float> row) {
  if (row.empty()) throw ShapeError("argmax over an empty row");
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

TrackResult track_point(const TrackQuery& query, const AttentionMap& map, std::size_t grid_h,
                        std::size_t grid_w, std::size_t image_size) {
  if (grid_h == 0 || grid_w == 0 || image_size == 0) throw ParameterError("track: empty grid");
  if (map.scores.rows() != grid_h * grid_w || map.scores.cols() != grid_h * grid_w) {
    throw ShapeError("track: attention map is not " + std::to_string(grid_h * grid_w) + " square");
  }
  const std::size_t src = pixel_to_token(query.point, grid_h, grid_w, image_size);
  auto row = map.scores.row(src);
  const std::size_t best = argmax_row(row);
  return {token_center(best, grid_h, grid_w, image_size), best, row[best]};
}

double position_accuracy(std::span<const PredictionPair> predictions, double delta) {
  if (predictions.empty()) throw ParameterError("position_accuracy: no predictions");
  if (!(delta > 0.0)) throw ParameterError("position_accuracy: delta must be positive");
  std::size_t hits = 0;
  for (const auto& p : predictions) {
    if (std::hypot(p.predicted.x - p.truth.x, p.predicted.y - p.truth.y) <= delta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

const AccuracyCell& AccuracyTable::at(std::size_t layer, std::size_t step, double delta) const {
  for (const auto& c : cells) {
    if (c.layer == layer && c.step == step && c.delta == delta) return c;
  }
  throw BoundsError("accuracy table: no cell for layer " + std::to_string(layer) + ", step " +
                    std::to_string(step));
}

std::string AccuracyTable::to_csv() const {
  std::ostringstream out;
  out << "layer,step,delta,accuracy,n_points\n";
  for (const auto& c : cells) {
    out << c.layer << ',' << c.step << ',' << c.delta << ',' << std::setprecision(6) << std::fixed
        << c.accuracy << std::defaultfloat << ',' << c.n_points << '\n';
  }
  return out.str();
}

std::vector<std::pair<std::size_t, std::size_t>> tracking_pairs(std::size_t n_frames,
                                                                std::size_t pair_stride) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t t = 0; t + 1 < n_frames; ++t) pairs.emplace_back(t, t + 1);
  if (pair_stride > 1) {
    for (std::size_t t = 0; t + pair_stride < n_frames; t += pair_stride) {
      pairs.emplace_back(t, t + pair_stride);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  if (pairs.empty()) pairs.emplace_back(0, 0);
  return pairs;
}

AccuracyTable evaluate_tracking(const SyntheticClip& clip, const ToyEditNetwork& network,
                                const EvalConfig& cfg) {
  const auto layers = cfg.layers.empty() ? all_up_to(network.num_layers()) : cfg.layers;
  const auto steps = cfg.steps.empty() ? all_up_to(network.steps()) : cfg.steps;
  for (auto l : layers) {
    if (l >= network.num_layers()) throw ParameterError("evaluate_tracking: layer out of range");
    const auto& w = network.layer(l);
    if (cfg.image_size % w.grid_w != 0 || cfg.image_size % w.grid_h != 0) {
      throw ParameterError("evaluate_tracking: image_size not divisible by layer grid");
    }
  }
  for (auto s : steps) {
    if (s >= network.steps()) throw ParameterError("evaluate_tracking: step out of range");
  }
  if (cfg.thresholds.empty()) throw ParameterError("evaluate_tracking: no thresholds");
  for (double d : cfg.thresholds) {
    if (!(d > 0.0)) throw ParameterError("evaluate_tracking: thresholds must be positive");
  }
  if (cfg.query_grid == 0) throw ParameterError("evaluate_tracking: query_grid must be >= 1");
  if (clip.size() == 0) throw ParameterError("evaluate_tracking: empty clip");
  for (const auto& f : clip.frames()) network.check_input(f);

  const auto& ncfg = network.config();
  const double to_eval = static_cast<double>(cfg.image_size) /
                         static_cast<double>(clip.spec().image_size);

  // Query points: input-grid token centres nearest the centres of the coarsest
  // evaluated grid, so self-correspondence is within half an input token at
  // every layer.
  std::size_t coarsest = 1;
  for (auto l : layers) coarsest = std::max(coarsest, ncfg.grid_w / network.layer(l).grid_w);
  const auto qx = query_axis(ncfg.grid_w, coarsest, cfg.query_grid);
  const auto qy = query_axis(ncfg.grid_h, coarsest, cfg.query_grid);
  std::vector<PixelPoint> queries;
  for (auto ty : qy) {
    for (auto tx : qx) {
      queries.push_back(token_center(ty * ncfg.grid_w + tx, ncfg.grid_h, ncfg.grid_w, cfg.image_size));
    }
  }

  std::vector<FrameTrace> traces(clip.size());
  const auto n_frames = static_cast<long>(clip.size());
#pragma omp parallel for schedule(static)
  for (long f = 0; f < n_frames; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    traces[fi] = trace_frame(clip.frames()[fi], network, layers, steps);
  }

  const auto pairs = tracking_pairs(clip.size(), cfg.pair_stride);
  const std::size_t n_cells = layers.size() * steps.size();
  const std::size_t n_tasks = n_cells * pairs.size();
  // hits[task * thresholds + d], counted[task]
  std::vector<std::size_t> hits(n_tasks * cfg.thresholds.size(), 0);
  std::vector<std::size_t> counted(n_tasks, 0);
  const auto& attn_cfg = network.attention_config();

#pragma omp parallel for schedule(dynamic)
  for (long task = 0; task < static_cast<long>(n_tasks); ++task) {
    const auto ti = static_cast<std::size_t>(task);
    const std::size_t cell = ti / pairs.size();
    const auto [src, dst] = pairs[ti % pairs.size()];
    const std::size_t layer = layers[cell / steps.size()];
    const auto& w = network.layer(layer);

    std::vector<std::size_t> rows;
    std::vector<PixelPoint> truth;
    for (const auto& q : queries) {
      const auto gt = clip.map_point(src, dst, q.x / to_eval, q.y / to_eval);
      const PixelPoint t{gt[0] * to_eval, gt[1] * to_eval};
      const auto size = static_cast<double>(cfg.image_size);
      if (!(t.x >= 0.0 && t.y >= 0.0 && t.x < size && t.y < size)) continue;
      rows.push_back(pixel_to_token(q, w.grid_h, w.grid_w, cfg.image_size));
      truth.push_back(t);
    }
    counted[ti] = rows.size();
    if (rows.empty()) continue;
    const QKV qsub = select_rows(traces[src].cells[cell], rows);
    const AttentionMap map = head_avg_attention_map(qsub, traces[dst].cells[cell], attn_cfg);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t best = argmax_row(map.scores.row(r));
      const PixelPoint pred = token_center(best, w.grid_h, w.grid_w, cfg.image_size);
      const double err = std::hypot(pred.x - truth[r].x, pred.y - truth[r].y);
      for (std::size_t d = 0; d < cfg.thresholds.size(); ++d) {
        if (err <= cfg.thresholds[d]) ++hits[ti * cfg.thresholds.size() + d];
      }
    }
  }

  AccuracyTable table;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (std::size_t si = 0; si < steps.size(); ++si) {
      const std::size_t cell = li * steps.size() + si;
      for (std::size_t d = 0; d < cfg.thresholds.size(); ++d) {
        std::size_t h = 0, n = 0;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          h += hits[(cell * pairs.size() + p) * cfg.thresholds.size() + d];
          n += counted[cell * pairs.size() + p];
        }
        table.cells.push_back({layers[li], steps[si], cfg.thresholds[d],
                               n == 0 ? 0.0 : static_cast<double>(h) / static_cast<double>(n), n});
      }
    }
  }
  return table;
}

}  // namespace anchorprop
