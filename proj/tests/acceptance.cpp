// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "anchorprop/anchor.hpp"
#include "anchorprop/attention.hpp"
#include "anchorprop/equivariance.hpp"
#include "anchorprop/metrics.hpp"
#include "anchorprop/parallel.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/synthdata.hpp"
#include "anchorprop/tensor.hpp"
#include "anchorprop/tracking.hpp"
#include "oracles.hpp"

using namespace anchorprop;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s criterion %d (%s): %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", id,
              name, o.detail.c_str(), secs, limit_s, in_time ? "" : " [over time]");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

NetworkConfig tracking_network(std::uint64_t seed) {
  NetworkConfig c;
  c.grid_h = c.grid_w = 16;
  c.dim = 64;
  c.steps = 4;
  c.seed = seed;
  return c;
}

ClipSpec tracking_clip(std::uint64_t seed, MotionType motion, double shift, bool distinct) {
  ClipSpec s;
  s.seed = seed;
  s.n_frames = 8;
  s.grid_h = s.grid_w = 16;
  s.dim = 64;
  s.image_size = 256;
  s.motion = motion;
  s.shift_x = shift;
  s.distinct_tokens = distinct;
  return s;
}

// Embeds a frame as its first token.
class FirstToken final : public Embedder {
 public:
  std::vector<float> embed(const FrameFeatures& f) const override {
    return {f.tokens.row(0).begin(), f.tokens.row(0).end()};
  }
  std::size_t dim() const override { return 2; }
  std::string name() const override { return "first-token"; }
};

FrameFeatures point(float x, float y, std::size_t index) { return {index, 1, 1, Matrix(1, 2, {x, y})}; }

Outcome reduction_identity() {
  std::mt19937_64 rng(1001);
  for (int t = 0; t < 100; ++t) {
    const std::size_t heads = 1 + rng() % 4, hd = 1 + rng() % 32;
    auto qkv = oracle::random_qkv(1 + rng() % 64, heads * hd, rng, 2.0);
    const auto cfg = AttentionConfig::make(heads * hd, heads);
    if (!bytes_equal(anchor_attention(qkv, CacheEntry{}, cfg), self_attention(qkv, cfg))) {
      return {false, "mismatch on instance " + std::to_string(t)};
    }
  }
  return {true, "100/100 byte-identical"};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(1002);
  double worst = 0.0;
  int instances = 0;
  for (int t = 0; t < 60; ++t) {
    const std::size_t heads = 1 + rng() % 2, hd = 1 + rng() % 16, n = 1 + rng() % 16;
    const std::size_t dim = heads * hd;
    auto a = oracle::random_qkv(n, dim, rng);
    auto b = oracle::random_qkv(n, dim, rng);
    const auto cfg = AttentionConfig::make(dim, heads);
    const std::vector<QKV> others{b};
    worst = std::max(worst, oracle::max_rel_err(self_attention(a, cfg),
                                                oracle::attention(a.q, {&a.k}, {&a.v}, heads, cfg.temperature)));
    worst = std::max(worst, oracle::max_rel_err(cross_frame_attention(a, others, cfg, true),
                                                oracle::attention(a.q, {&a.k, &b.k}, {&a.v, &b.v}, heads,
                                                                  cfg.temperature)));
    const CacheEntry entry{b.k, b.v, n};
    worst = std::max(worst, oracle::max_rel_err(anchor_attention(a, entry, cfg),
                                                oracle::attention(a.q, {&a.k, &b.k}, {&a.v, &b.v}, heads,
                                                                  cfg.temperature)));
    ++instances;
  }
  return {worst <= 1e-5, std::to_string(instances) + " instances x 3 ops, max rel err " + fmt("%.3g", worst)};
}

Outcome tracking_correctness() {
  const std::vector<std::size_t> full_res = {0, 4};
  double worst_int = 1.0, worst_sub = 1.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const ToyEditNetwork net(tracking_network(s));
    EvalConfig ec;
    ec.image_size = 256;
    ec.thresholds = {16.0};
    for (int kind = 0; kind < 2; ++kind) {
      const auto clip = generate_clip(kind == 0 ? tracking_clip(100 + s, MotionType::kIntegerShift, 1.0, true)
                                                : tracking_clip(100 + s, MotionType::kSubTokenShift, 0.5, true));
      const auto table = evaluate_tracking(clip, net, ec);
      for (auto l : full_res)
        for (std::size_t step = 0; step < net.steps(); ++step) {
          const double acc = table.at(l, step, clip.stride()).accuracy;
          (kind == 0 ? worst_int : worst_sub) = std::min(kind == 0 ? worst_int : worst_sub, acc);
        }
    }
  }
  return {worst_int == 1.0 && worst_sub >= 0.9,
          "min integer-shift acc " + fmt("%.4f", worst_int) + ", min sub-token acc " + fmt("%.4f", worst_sub)};
}

Outcome resolution_direction() {
  const ToyEditNetwork net(tracking_network(0));
  const auto clip = generate_clip(tracking_clip(100, MotionType::kSubTokenShift, 0.5, true));
  EvalConfig ec;
  ec.image_size = 256;
  ec.thresholds = {16.0};
  const auto table = evaluate_tracking(clip, net, ec);
  double full = 1.0, bottleneck = 0.0;
  bool ok = true;
  for (std::size_t step = 0; step < net.steps(); ++step) {
    const double f = std::min(table.at(0, step, 16.0).accuracy, table.at(4, step, 16.0).accuracy);
    const double b = table.at(2, step, 16.0).accuracy;
    ok = ok && f >= b;
    full = std::min(full, f);
    bottleneck = std::max(bottleneck, b);
  }
  return {ok, "min full-res acc " + fmt("%.4f", full) + ", max bottleneck acc " + fmt("%.4f", bottleneck)};
}

Outcome consistency_ordering() {
  int wins = 0;
  double sum_a = 0.0, sum_i = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ToyEditNetwork net(tracking_network(s));
    const auto clip = generate_clip(tracking_clip(100 + s, MotionType::kSubTokenShift, 0.5, false));
    const ToyEmbedder emb(64);
    const double a = tem_con(edit_video(clip.frames(), net, EditMode::kAnchored, 3).frames, emb);
    const double i = tem_con(edit_video(clip.frames(), net, EditMode::kIndependent).frames, emb);
    sum_a += a;
    sum_i += i;
    wins += a > i;
  }
  return {sum_a > sum_i && wins >= 17, "mean anchored " + fmt("%.5f", sum_a / 20) + " vs independent " +
                                           fmt("%.5f", sum_i / 20) + ", anchored wins " +
                                           std::to_string(wins) + "/20"};
}

Outcome parallel_exactness() {
  NetworkConfig c;
  c.grid_h = c.grid_w = 16;
  c.dim = 64;
  c.steps = 4;
  c.seed = 5;
  const ToyEditNetwork net(c);
  auto spec = tracking_clip(7, MotionType::kSubTokenShift, 0.25, false);
  spec.n_frames = 24;
  const auto clip = generate_clip(spec);
  const auto ref = run_parallel(clip.frames(), net, 3, 1);
  for (std::size_t w : {2, 4, 8}) {
    const auto got = run_parallel(clip.frames(), net, 3, w);
    for (std::size_t f = 0; f < ref.frames.size(); ++f) {
      if (!bytes_equal(got.frames[f].tokens, ref.frames[f].tokens)) {
        return {false, std::to_string(w) + " workers differ at frame " + std::to_string(f)};
      }
    }
  }
  return {true, "workers {1,2,4,8} byte-identical on 24 frames"};
}

Outcome parallel_scaling() {
  NetworkConfig c;
  c.grid_h = c.grid_w = 32;
  c.dim = 64;
  c.steps = 10;
  c.seed = 1;
  const ToyEditNetwork net(c);
  ClipSpec spec;
  spec.seed = 1;
  spec.n_frames = 120;
  spec.grid_h = spec.grid_w = 32;
  spec.dim = 64;
  spec.image_size = 256;
  spec.motion = MotionType::kSubTokenShift;
  spec.shift_x = 0.125;
  spec.distinct_tokens = false;
  const auto clip = generate_clip(spec);
  auto timed = [&](std::size_t workers) {
    const auto t0 = Clock::now();
    run_parallel(clip.frames(), net, 3, workers);
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };
  const double t1 = timed(1);
  const double t8 = timed(8);
  const double fps = 120.0 / t1;
  const double speedup = t1 / t8;
  const unsigned cores = std::thread::hardware_concurrency();
  return {fps >= 10.0 && speedup >= 3.0,
          "1-worker " + fmt("%.2f", fps) + " frames/s (need 10), 8-worker speedup " + fmt("%.2f", speedup) +
              "x (need 3) on " + std::to_string(cores) + " hardware thread(s)"};
}

Outcome equivariance_calibration() {
  const Image src = make_test_image(256, 256, 3);
  double pointwise = 0.0;
  for (const ImageEditor& ed : {ImageEditor(editors::invert), ImageEditor(editors::contrast)}) {
    pointwise = std::max(pointwise, verify_equivariance(ed, src, 50, 1e-6, 0).max);
  }
  const double flip = verify_equivariance(editors::flip_horizontal, src, 50, 1e-6, 0).max;
  return {pointwise <= 1e-6 && flip > 0.01,
          "pointwise max dev " + fmt("%.3g", pointwise) + ", flip max dev " + fmt("%.4f", flip)};
}

Outcome augmentation_contract() {
  const std::size_t n = 10000;
  double rot = 0, tx = 0, ty = 0, sc = 0, shx = 0, shy = 0, ox = 0, oy = 0;
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto p = sample_affine(s);
    p.validate();
    rot += p.rotation_deg;
    tx += p.translate_x;
    ty += p.translate_y;
    sc += p.scale;
    shx += p.shear_x_deg;
    shy += p.shear_y_deg;
    ox += static_cast<double>(p.crop.offset_x);
    oy += static_cast<double>(p.crop.offset_y);
  }
  const double d = static_cast<double>(n);
  // Mean within 1% of the range width of the midpoint.
  struct Check {
    const char* name;
    double mean, mid, width;
  };
  const Check checks[] = {{"rotation", rot / d, 0.0, 10.0},  {"translate_x", tx / d, 0.0, 0.1},
                          {"translate_y", ty / d, 0.0, 0.1}, {"scale", sc / d, 1.0, 0.1},
                          {"shear_x", shx / d, 0.0, 10.0},   {"shear_y", shy / d, 0.0, 10.0},
                          {"offset_x", ox / d, 16.0, 32.0},  {"offset_y", oy / d, 16.0, 32.0}};
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    const double r = std::abs(c.mean - c.mid) / c.width;
    if (r > worst) {
      worst = r;
      worst_name = c.name;
    }
  }
  return {worst <= 0.01, "10000 samples in range, worst mean offset " + fmt("%.4f", worst * 100.0) +
                             "% of range (" + worst_name + ")"};
}

Outcome metric_identities() {
  std::mt19937_64 rng(1010);
  const FrameFeatures f{0, 4, 4, oracle::random_matrix(16, 8, rng)};
  std::vector<FrameFeatures> still(6, f);
  for (std::size_t i = 0; i < still.size(); ++i) still[i].frame_index = i;
  const double tc = tem_con(still, ToyEmbedder(8));
  const FirstToken emb;
  const std::vector<float> target{1, 0}, source{0, 1};
  const std::vector<FrameFeatures> all{point(1, 0, 0), point(1, 0, 1)};
  const std::vector<FrameFeatures> four{point(1, 0.1f, 0), point(1, 0.2f, 1), point(1, -0.3f, 2),
                                        point(0.1f, 1, 3)};
  const double a1 = frame_acc(all, emb, source, target);
  const double a0 = frame_acc(all, emb, target, target);
  const double a75 = frame_acc(four, emb, source, target);
  const bool ok = std::abs(tc - 1.0) <= 1e-6 && a1 == 1.0 && a0 == 0.0 && a75 == 0.75;
  return {ok, "constant Tem-Con " + fmt("%.9f", tc) + ", frame_acc " + fmt("%.2f", a1) + "/" + fmt("%.2f", a0) +
                  "/" + fmt("%.2f", a75)};
}

Outcome invariance_suite() {
  std::mt19937_64 rng(1011);
  std::uniform_real_distribution<double> temp(0.1, 10.0);
  const int cases = 200;
  int row_sum = 0, shift = 0, argmax = 0, perm = 0, convex = 0;
  for (int t = 0; t < cases; ++t) {
    const std::size_t rows = 1 + rng() % 16, cols = 1 + rng() % 48;
    const Matrix logits = oracle::random_matrix(rows, cols, rng, 4.0);
    const double tau = temp(rng);
    const Matrix s = softmax_rows(logits, tau);
    bool sums = true;
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (float v : s.row(r)) sum += v;
      sums = sums && std::abs(sum - 1.0) <= 1e-5;
    }
    row_sum += sums;

    std::uniform_int_distribution<int> c(-500, 500);
    // Exact-float logits so the shift itself is lossless.
    Matrix grid = logits;
    for (float& v : grid.values()) v = std::round(v * 64.0f) / 64.0f;
    Matrix grid_shifted = grid;
    for (std::size_t r = 0; r < rows; ++r) {
      const float k = static_cast<float>(c(rng));
      for (float& v : grid_shifted.row(r)) v += k;
    }
    shift += max_abs_diff(softmax_rows(grid, tau), softmax_rows(grid_shifted, tau)) <= 1e-6;

    // Single-head argmax is unchanged by temperature, away from near ties.
    const Matrix s2 = softmax_rows(logits, temp(rng));
    bool same = true;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<float> row(logits.row(r).begin(), logits.row(r).end());
      std::sort(row.rbegin(), row.rend());
      if (row.size() > 1 && row[0] - row[1] < 1e-4f) continue;
      same = same && argmax_row(s.row(r)) == argmax_row(s2.row(r)) &&
             argmax_row(s.row(r)) == argmax_row(logits.row(r));
    }
    argmax += same;

    const std::size_t heads = 1 + rng() % 3, hd = 1 + rng() % 16, n = 2 + rng() % 24;
    const auto cfg = AttentionConfig::make(heads * hd, heads);
    const auto qkv = oracle::random_qkv(n, heads * hd, rng);
    const Matrix out = self_attention(qkv, cfg);
    std::vector<std::size_t> pi(n);
    std::iota(pi.begin(), pi.end(), 0);
    std::shuffle(pi.begin(), pi.end(), rng);
    QKV permuted{Matrix(n, heads * hd), Matrix(n, heads * hd), Matrix(n, heads * hd)};
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(qkv.q.row(pi[i]).begin(), qkv.q.row(pi[i]).end(), permuted.q.row(i).begin());
      std::copy(qkv.k.row(pi[i]).begin(), qkv.k.row(pi[i]).end(), permuted.k.row(i).begin());
      std::copy(qkv.v.row(pi[i]).begin(), qkv.v.row(pi[i]).end(), permuted.v.row(i).begin());
    }
    const Matrix pout = self_attention(permuted, cfg);
    double pd = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < heads * hd; ++d) pd = std::max(pd, std::abs(double(pout(i, d)) - out(pi[i], d)));
    perm += pd <= 1e-5;

    bool bounded = true;
    for (std::size_t d = 0; d < heads * hd; ++d) {
      float lo = qkv.v(0, d), hi = qkv.v(0, d);
      for (std::size_t j = 1; j < n; ++j) {
        lo = std::min(lo, qkv.v(j, d));
        hi = std::max(hi, qkv.v(j, d));
      }
      for (std::size_t i = 0; i < n; ++i) bounded = bounded && out(i, d) >= lo - 1e-6f && out(i, d) <= hi + 1e-6f;
    }
    convex += bounded;
  }
  const bool ok = row_sum == cases && shift == cases && argmax == cases && perm == cases && convex == cases;
  char buf[160];
  std::snprintf(buf, sizeof buf, "row-sum %d, shift %d, argmax %d, permutation %d, convex %d of %d", row_sum,
                shift, argmax, perm, convex, cases);
  return {ok, buf};
}

}  // namespace

int main() {
  criterion(1, "reduction identity", 1, reduction_identity);
  criterion(2, "attention oracle equivalence", 5, oracle_equivalence);
  criterion(3, "tracking correctness", 30, tracking_correctness);
  criterion(4, "resolution degradation direction", 30, resolution_direction);
  criterion(5, "consistency ordering", 120, consistency_ordering);
  criterion(6, "parallel bit-exactness", 60, parallel_exactness);
  criterion(7, "parallel scaling", 120, parallel_scaling);
  criterion(8, "equivariance calibration", 30, equivariance_calibration);
  criterion(9, "augmentation contract", 10, augmentation_contract);
  criterion(10, "metric identities", 1, metric_identities);
  criterion(11, "invariance suite", 60, invariance_suite);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
