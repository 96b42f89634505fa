#include "anchorprop/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anchorprop/container.hpp"
#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

void require_nonzero(std::span<const float> v, const char* what) {
  double ss = 0.0;
  for (float x : v) ss += static_cast<double>(x) * x;
  if (!(std::sqrt(ss) > 1e-12)) throw DegenerateVectorError(std::string("frame_acc: zero ") + what);
}

}  // namespace

ToyEmbedder::ToyEmbedder(std::size_t feature_dim, std::size_t out_dim, std::uint64_t seed)
    : projection_(5 * feature_dim, out_dim) {
  if (feature_dim == 0 || out_dim == 0) throw ParameterError("embedder: empty dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(out_dim)));
  for (float& v : projection_.values()) v = static_cast<float>(normal(rng));
}

std::vector<float> ToyEmbedder::embed(const FrameFeatures& frame) const {
  frame.validate();
  const std::size_t d = frame.dim();
  if (5 * d != projection_.rows()) throw ShapeError("embedder: feature width mismatch");
  // pooled = [global mean, top-left, top-right, bottom-left, bottom-right]
  std::vector<double> pooled(5 * d, 0.0);
  std::vector<std::size_t> counts(5, 0);
  const std::size_t hh = (frame.grid_h + 1) / 2;
  const std::size_t hw = (frame.grid_w + 1) / 2;
  for (std::size_t y = 0; y < frame.grid_h; ++y) {
    for (std::size_t x = 0; x < frame.grid_w; ++x) {
      const std::size_t q = 1 + (y >= hh ? 2 : 0) + (x >= hw ? 1 : 0);
      auto row = frame.tokens.row(y * frame.grid_w + x);
      for (std::size_t c = 0; c < d; ++c) {
        pooled[c] += row[c];
        pooled[q * d + c] += row[c];
      }
      ++counts[0];
      ++counts[q];
    }
  }
  for (std::size_t b = 0; b < 5; ++b) {
    const double n = counts[b] == 0 ? 1.0 : static_cast<double>(counts[b]);
    for (std::size_t c = 0; c < d; ++c) pooled[b * d + c] /= n;
  }
  std::vector<double> acc(projection_.cols(), 0.0);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    auto prow = projection_.row(i);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += pooled[i] * prow[j];
  }
  return {acc.begin(), acc.end()};
}

PrecomputedEmbedder::PrecomputedEmbedder(Matrix table) : table_(std::move(table)) {
  if (table_.rows() == 0 || table_.cols() == 0) throw ShapeError("embedder: empty embedding table");
}

PrecomputedEmbedder PrecomputedEmbedder::load(const std::filesystem::path& path) {
  return PrecomputedEmbedder(tensor_to_matrix(load_tensor(path)));
}

std::vector<float> PrecomputedEmbedder::embed(const FrameFeatures& frame) const {
  if (frame.frame_index >= table_.rows()) {
    throw BoundsError("embedder: no precomputed embedding for frame " +
                      std::to_string(frame.frame_index));
  }
  auto row = table_.row(frame.frame_index);
  return {row.begin(), row.end()};
}

FrameFeatures image_as_frame(const Image& img, std::size_t frame_index) {
  img.validate();
  return {frame_index, img.height, img.width, Matrix(img.height * img.width, img.channels, img.pixels)};
}

std::vector<double> adjacent_similarities(std::span<const FrameFeatures> frames,
                                          const Embedder& emb) {
  if (frames.size() < 2) throw ParameterError("tem_con: needs at least 2 frames");
  std::vector<double> sims;
  sims.reserve(frames.size() - 1);
  auto prev = emb.embed(frames[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    auto cur = emb.embed(frames[t]);
    sims.push_back(cosine_sim(prev, cur));
    prev = std::move(cur);
  }
  return sims;
}

double tem_con(std::span<const FrameFeatures> frames, const Embedder& emb) {
  const auto sims = adjacent_similarities(frames, emb);
  double total = 0.0;
  for (double s : sims) total += s;
  return total / static_cast<double>(sims.size());
}

double frame_acc(std::span<const FrameFeatures> frames, const Embedder& emb,
                 std::span<const float> source_ref, std::span<const float> target_ref) {
  if (frames.empty()) throw ParameterError("frame_acc: empty video");
  require_nonzero(source_ref, "source reference");
  require_nonzero(target_ref, "target reference");
  std::size_t wins = 0;
  for (const auto& f : frames) {
    const auto e = emb.embed(f);
    if (cosine_sim(e, target_ref) > cosine_sim(e, source_ref)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(frames.size());
}

MetricsReport compute_metrics(std::span<const FrameFeatures> frames, const Embedder& emb,
                              std::span<const float> source_ref, std::span<const float> target_ref) {
  MetricsReport r;
  r.frames = frames.size();
  r.embedder = emb.name();
  r.pair_similarities = adjacent_similarities(frames, emb);
  double total = 0.0;
  for (double s : r.pair_similarities) total += s;
  r.tem_con = total / static_cast<double>(r.pair_similarities.size());
  if (!source_ref.empty() || !target_ref.empty()) {
    r.frame_acc = frame_acc(frames, emb, source_ref, target_ref);
    r.has_frame_acc = true;
  }
  return r;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"tem_con", r.tem_con},
                     {"frames", r.frames},
                     {"embedder", r.embedder},
                     {"pair_similarities", r.pair_similarities}};
  j["frame_acc"] = r.has_frame_acc ? nlohmann::json(r.frame_acc) : nlohmann::json(nullptr);
}

std::string pair_similarities_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "frame,next_frame,cosine\n" << std::setprecision(9);
  for (std::size_t t = 0; t < r.pair_similarities.size(); ++t) {
    out << t << ',' << t + 1 << ',' << r.pair_similarities[t] << '\n';
  }
  return out.str();
}

}  // namespace anchorprop
