#include "anchorprop/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

constexpr std::size_t kLanes = 16;
constexpr std::size_t kRowBlock = 8;

// Explicit 16-wide float vectors; lowered to whatever the target ISA offers.
using Lane = float __attribute__((vector_size(kLanes * sizeof(float))));
using LaneI = std::int32_t __attribute__((vector_size(kLanes * sizeof(std::int32_t))));

inline Lane load_lane(const float* p) {
  Lane v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store_lane(float* p, Lane v) { std::memcpy(p, &v, sizeof v); }

inline Lane splat(float x) { return Lane{} + x; }

// exp(x) for x <= 0, lane-wise. Relative error is below 2e-7 on [-87, 0];
// inputs below -87 flush to 0.
inline Lane exp_nonpositive(Lane x) {
  constexpr float kLog2e = 1.44269504088896341f;
  constexpr float kLn2Hi = 0.693359375f;
  constexpr float kLn2Lo = -2.12194440e-4f;
  const LaneI underflow = x < -87.0f;
  x = x < -87.0f ? splat(-87.0f) : x;
  // floor via truncation: y <= 0.5 here, so truncation rounds negatives up.
  const Lane y = x * kLog2e + 0.5f;
  Lane n = __builtin_convertvector(__builtin_convertvector(y, LaneI), Lane);
  n = n > y ? n - 1.0f : n;
  Lane r = x - n * kLn2Hi;
  r = r - n * kLn2Lo;
  Lane p = splat(1.0f / 5040.0f);
  p = p * r + 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const LaneI biased = __builtin_convertvector(n, LaneI) + 127;
  Lane scale;
  const LaneI bits = biased << 23;
  std::memcpy(&scale, &bits, sizeof scale);
  return underflow ? splat(0.0f) : p * scale;
}

float lane_max(const float* x, std::size_t n) {
  float lanes[kLanes];
  std::fill(std::begin(lanes), std::end(lanes), -std::numeric_limits<float>::infinity());
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t c = 0; c < kLanes; ++c) lanes[c] = std::max(lanes[c], x[j + c]);
  }
  for (std::size_t c = 0; j < n; ++j, ++c) lanes[c] = std::max(lanes[c], x[j]);
  return *std::max_element(std::begin(lanes), std::end(lanes));
}

double lane_sum(const float* x, std::size_t n) {
  double lanes[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t c = 0; c < kLanes; ++c) lanes[c] += static_cast<double>(x[j + c]);
  }
  for (std::size_t c = 0; j < n; ++j, ++c) lanes[c] += static_cast<double>(x[j]);
  double total = 0.0;
  for (double l : lanes) total += l;
  return total;
}

// scores[r][j] = sum over d, in order, of q[r][d] * keys_t[d][j] for a block of
// kRowBlock query rows. n_pad is a multiple of kLanes.
void score_block(const float* q, const float* keys_t, std::size_t hd, std::size_t n_pad,
                 float* scores) {
  for (std::size_t j = 0; j < n_pad; j += kLanes) {
    Lane s[kRowBlock] = {};
    for (std::size_t d = 0; d < hd; ++d) {
      const Lane kd = load_lane(keys_t + d * n_pad + j);
#pragma GCC unroll 8
      for (std::size_t r = 0; r < kRowBlock; ++r) s[r] += q[r * hd + d] * kd;
    }
    for (std::size_t r = 0; r < kRowBlock; ++r) store_lane(scores + r * n_pad + j, s[r]);
  }
}

// acc[r][c] = sum over j, in order, of p[r][j] * vals[j][c].
template <std::size_t HD>
void value_block_fixed(const float* p, std::size_t n_pad, const float* vals, std::size_t n_keys,
                       float* acc) {
  constexpr std::size_t kW = HD / kLanes;
  Lane a[kRowBlock][kW] = {};
  for (std::size_t j = 0; j < n_keys; ++j) {
    Lane vj[kW];
    for (std::size_t w = 0; w < kW; ++w) vj[w] = load_lane(vals + j * HD + w * kLanes);
#pragma GCC unroll 8
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const float pr = p[r * n_pad + j];
      for (std::size_t w = 0; w < kW; ++w) a[r][w] += pr * vj[w];
    }
  }
  for (std::size_t r = 0; r < kRowBlock; ++r) {
    for (std::size_t w = 0; w < kW; ++w) store_lane(acc + r * HD + w * kLanes, a[r][w]);
  }
}

void value_block(const float* p, std::size_t n_pad, const float* vals, std::size_t n_keys,
                 std::size_t hd, float* acc) {
  switch (hd) {
    case 16: return value_block_fixed<16>(p, n_pad, vals, n_keys, acc);
    case 32: return value_block_fixed<32>(p, n_pad, vals, n_keys, acc);
    default: break;
  }
  std::fill(acc, acc + kRowBlock * hd, 0.0f);
  for (std::size_t j = 0; j < n_keys; ++j) {
    const float* vj = vals + j * hd;
    for (std::size_t r = 0; r < kRowBlock; ++r) {
      const float pr = p[r * n_pad + j];
      float* ar = acc + r * hd;
      for (std::size_t c = 0; c < hd; ++c) ar[c] += pr * vj[c];
    }
  }
}

void check_block_shapes(const Matrix& q, std::span<const KeyValueBlock> blocks,
                        const AttentionConfig& cfg) {
  if (q.cols() != cfg.dim) {
    throw ShapeError("attention: query width " + std::to_string(q.cols()) +
                     " does not match dim " + std::to_string(cfg.dim));
  }
  for (const auto& b : blocks) {
    if (b.k == nullptr || b.v == nullptr) throw ShapeError("attention: null key/value block");
    if (b.k->rows() != b.v->rows()) throw ShapeError("attention: key/value row mismatch");
    if (b.k->rows() == 0) continue;
    if (b.k->cols() != cfg.dim || b.v->cols() != cfg.dim) {
      throw ShapeError("attention: key/value width does not match dim");
    }
  }
}

Matrix head_slice(const Matrix& m, std::size_t head, std::size_t head_dim) {
  Matrix out(m.rows(), head_dim);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r).subspan(head * head_dim, head_dim);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

void FrameFeatures::validate() const {
  if (tokens.rows() != grid_h * grid_w) {
    throw ShapeError("frame " + std::to_string(frame_index) + ": " +
                     std::to_string(tokens.rows()) + " tokens for a " + std::to_string(grid_h) +
                     "x" + std::to_string(grid_w) + " grid");
  }
}

AttentionConfig AttentionConfig::make(std::size_t dim, std::size_t num_heads) {
  AttentionConfig cfg;
  cfg.dim = dim;
  cfg.num_heads = num_heads;
  cfg.validate();
  cfg.temperature = std::sqrt(static_cast<double>(cfg.head_dim()));
  return cfg;
}

void AttentionConfig::validate() const {
  if (num_heads == 0) throw ParameterError("attention: num_heads must be >= 1");
  if (dim == 0 || dim % num_heads != 0) {
    throw ShapeError("attention: dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(num_heads) + " heads");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("attention: temperature must be positive");
  }
}

QKV project_qkv(const FrameFeatures& frame, const ProjectionWeights& weights) {
  frame.validate();
  const std::size_t d = frame.dim();
  for (const Matrix* w : {&weights.wq, &weights.wk, &weights.wv}) {
    if (w->rows() != d || w->cols() != d) {
      throw ShapeError("project_qkv: projection must be " + std::to_string(d) + "x" +
                       std::to_string(d));
    }
  }
  return {matmul(frame.tokens, weights.wq), matmul(frame.tokens, weights.wk),
          matmul(frame.tokens, weights.wv)};
}

Matrix attend(const Matrix& q, std::span<const KeyValueBlock> blocks, const AttentionConfig& cfg) {
  cfg.validate();
  check_block_shapes(q, blocks, cfg);
  std::size_t n_keys = 0;
  for (const auto& b : blocks) n_keys += b.k->rows();
  if (n_keys == 0) throw EmptyContextError("attention: empty key/value context");
  if (!q.all_finite()) throw NumericError("attention: non-finite query");
  for (const auto& b : blocks) {
    if (!b.k->all_finite() || !b.v->all_finite()) {
      throw NumericError("attention: non-finite key/value");
    }
  }

  const std::size_t hd = cfg.head_dim();
  const std::size_t nq = q.rows();
  const std::size_t n_pad = (n_keys + kLanes - 1) / kLanes * kLanes;
  const auto inv_temp = static_cast<float>(1.0 / cfg.temperature);
  Matrix out(nq, cfg.dim);

  // Per head: keys transposed and zero-padded to whole lane groups, values row-major.
  std::vector<float> keys_t(hd * n_pad, 0.0f);
  std::vector<float> vals(n_keys * hd);
  std::vector<float> q_block(kRowBlock * hd);
  std::vector<float> scores(kRowBlock * n_pad);
  std::vector<float> acc(kRowBlock * hd);

  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const std::size_t col0 = h * hd;
    std::size_t j0 = 0;
    for (const auto& b : blocks) {
      for (std::size_t r = 0; r < b.k->rows(); ++r) {
        auto krow = b.k->row(r);
        auto vrow = b.v->row(r);
        for (std::size_t d = 0; d < hd; ++d) {
          keys_t[d * n_pad + j0 + r] = krow[col0 + d];
          vals[(j0 + r) * hd + d] = vrow[col0 + d];
        }
      }
      j0 += b.k->rows();
    }

    for (std::size_t i0 = 0; i0 < nq; i0 += kRowBlock) {
      const std::size_t nb = std::min(kRowBlock, nq - i0);
      // Rows past the end of q stay zero; their results are discarded.
      std::fill(q_block.begin(), q_block.end(), 0.0f);
      for (std::size_t r = 0; r < nb; ++r) {
        auto qrow = q.row(i0 + r).subspan(col0, hd);
        std::copy(qrow.begin(), qrow.end(), q_block.begin() + static_cast<std::ptrdiff_t>(r * hd));
      }
      score_block(q_block.data(), keys_t.data(), hd, n_pad, scores.data());

      std::vector<double> totals(kRowBlock, 1.0);
      for (std::size_t r = 0; r < nb; ++r) {
        float* s = scores.data() + r * n_pad;
        const float peak = lane_max(s, n_keys);
        for (std::size_t j = 0; j < n_pad; j += kLanes) {
          store_lane(s + j, exp_nonpositive((load_lane(s + j) - peak) * inv_temp));
        }
        totals[r] = lane_sum(s, n_keys);
      }
      value_block(scores.data(), n_pad, vals.data(), n_keys, hd, acc.data());
      for (std::size_t r = 0; r < nb; ++r) {
        auto orow = out.row(i0 + r).subspan(col0, hd);
        for (std::size_t c = 0; c < hd; ++c) {
          orow[c] = static_cast<float>(static_cast<double>(acc[r * hd + c]) / totals[r]);
        }
      }
    }
  }
  return out;
}

Matrix self_attention(const QKV& qkv, const AttentionConfig& cfg) {
  const KeyValueBlock own{&qkv.k, &qkv.v};
  return attend(qkv.q, std::span(&own, 1), cfg);
}

Matrix cross_frame_attention(const QKV& query_frame, std::span<const QKV> others,
                             const AttentionConfig& cfg, bool include_self) {
  std::vector<KeyValueBlock> blocks;
  blocks.reserve(others.size() + 1);
  if (include_self) blocks.push_back({&query_frame.k, &query_frame.v});
  for (const auto& o : others) blocks.push_back({&o.k, &o.v});
  return attend(query_frame.q, blocks, cfg);
}

Matrix head_attention_map(const QKV& q_frame, const QKV& k_frame, const AttentionConfig& cfg,
                          std::size_t head) {
  cfg.validate();
  if (q_frame.q.cols() != cfg.dim || k_frame.k.cols() != cfg.dim) {
    throw ShapeError("attention map: feature width does not match dim");
  }
  if (head >= cfg.num_heads) throw ParameterError("attention map: head index out of range");
  const std::size_t hd = cfg.head_dim();
  const Matrix qh = head_slice(q_frame.q, head, hd);
  const Matrix kh = head_slice(k_frame.k, head, hd);
  return softmax_rows(matmul(qh, transpose(kh)), cfg.temperature);
}

AttentionMap head_avg_attention_map(const QKV& q_frame, const QKV& k_frame,
                                    const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t nq = q_frame.q.rows();
  const std::size_t nk = k_frame.k.rows();
  std::vector<double> sum(nq * nk, 0.0);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const Matrix m = head_attention_map(q_frame, k_frame, cfg, h);
    auto vals = m.values();
    for (std::size_t i = 0; i < vals.size(); ++i) sum[i] += vals[i];
  }
  Matrix avg(nq, nk);
  auto out = avg.values();
  const auto heads = static_cast<double>(cfg.num_heads);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(sum[i] / heads);
  return {std::move(avg)};
}

}  // namespace anchorprop
