#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anchorprop/error.hpp"
#include "anchorprop/network.hpp"
#include "oracles.hpp"

using namespace anchorprop;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.grid_h = c.grid_w = 8;
  c.dim = 16;
  c.num_heads = 2;
  c.steps = 2;
  c.seed = 5;
  return c;
}

FrameFeatures random_frame(const NetworkConfig& c, std::mt19937_64& rng, std::size_t index = 0) {
  FrameFeatures f;
  f.frame_index = index;
  f.grid_h = c.grid_h;
  f.grid_w = c.grid_w;
  f.tokens = oracle::random_matrix(c.grid_h * c.grid_w, c.dim, rng);
  return f;
}

}  // namespace

TEST(NetworkConfig, Validation) {
  EXPECT_NO_THROW(small_config().validate());
  auto c = small_config();
  c.pyramid = {1, 4, 1};
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config();
  c.pyramid = {1, 2};
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config();
  c.pyramid = {1, 2, 4, 8, 16, 8, 4, 2, 1};
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config();
  c.dim = 15;
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config();
  c.steps = 0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = small_config();
  c.edit_variance = -1.0f;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Network, LayerGridsAndSkips) {
  ToyEditNetwork net(small_config());
  ASSERT_EQ(net.num_layers(), 5u);
  const std::size_t want[] = {8, 4, 2, 4, 8};
  for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(net.layer(l).grid_h, want[l]);
  EXPECT_EQ(net.input_grid_h(0), 8u);
  EXPECT_EQ(net.input_grid_h(3), 2u);
  EXPECT_EQ(net.skip_source(3), 1u);
  EXPECT_EQ(net.skip_source(4), 0u);
  EXPECT_EQ(net.skip_source(1), net.num_layers());
}

TEST(Network, WeightsAreSeededAndHashed) {
  auto c = small_config();
  ToyEditNetwork a(c), b(c);
  EXPECT_EQ(a.config_hash(), b.config_hash());
  EXPECT_TRUE(bytes_equal(a.layer(2).qkv.wv, b.layer(2).qkv.wv));
  c.seed = 6;
  ToyEditNetwork d(c);
  EXPECT_NE(a.config_hash(), d.config_hash());
  EXPECT_FALSE(bytes_equal(a.layer(2).qkv.wv, d.layer(2).qkv.wv));
  c = small_config();
  c.skip_gain = 1.0f;
  EXPECT_NE(ToyEditNetwork(c).config_hash(), a.config_hash());
}

TEST(Network, VariationSeedDependsOnContentOnly) {
  ToyEditNetwork net(small_config());
  std::mt19937_64 rng(1);
  auto f = random_frame(net.config(), rng, 0);
  auto g = f;
  g.frame_index = 7;
  EXPECT_EQ(net.variation_seed(f), net.variation_seed(g));
  g.tokens(0, 0) += 1.0f;
  EXPECT_NE(net.variation_seed(f), net.variation_seed(g));
}

TEST(Network, ValueOffsetWithoutVarianceIsBias) {
  auto c = small_config();
  c.edit_variance = 0.0f;
  ToyEditNetwork net(c);
  EXPECT_EQ(net.value_offset(1, 0, 42), net.layer(1).edit_bias);
  EXPECT_EQ(net.value_offset(1, 1, 7), net.layer(1).edit_bias);
}

TEST(Network, CheckInputRejectsWrongShape) {
  ToyEditNetwork net(small_config());
  FrameFeatures f;
  f.grid_h = f.grid_w = 4;
  f.tokens = Matrix(16, 16);
  EXPECT_THROW(net.check_input(f), ShapeError);
}

TEST(Network, RunIsDeterministicAndNormalised) {
  ToyEditNetwork net(small_config());
  std::mt19937_64 rng(2);
  std::vector<FrameFeatures> frames{random_frame(net.config(), rng)};
  auto site = [&](std::size_t, std::size_t, std::span<const QKV> batch, std::span<Matrix> out) {
    for (std::size_t b = 0; b < batch.size(); ++b) out[b] = self_attention(batch[b], net.attention_config());
  };
  auto a = net.run(frames, site);
  auto b = net.run(frames, site);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(bytes_equal(a[0], b[0]));
  EXPECT_EQ(a[0].rows(), 64u);
  for (std::size_t r = 0; r < a[0].rows(); ++r) {
    double ss = 0.0;
    for (float v : a[0].row(r)) ss += static_cast<double>(v) * v;
    EXPECT_NEAR(ss / 16.0, 1.0, 1e-5);
  }
}

TEST(Resample, PoolDuplicateCopy) {
  Matrix m(4, 1, {1, 2, 3, 4});
  auto pooled = resample_tokens(m, 2, 2, 1, 1);
  EXPECT_EQ(pooled(0, 0), 2.5f);
  auto up = resample_tokens(Matrix(1, 1, {3}), 1, 1, 2, 2);
  for (float v : up.values()) EXPECT_EQ(v, 3.0f);
  EXPECT_TRUE(bytes_equal(resample_tokens(m, 2, 2, 2, 2), m));
  EXPECT_THROW(resample_tokens(m, 2, 2, 4, 2), ShapeError);
  EXPECT_THROW(resample_tokens(m, 1, 2, 1, 1), ShapeError);
}

TEST(Resample, UpThenPoolIsIdentity) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t h = 1 + rng() % 6, w = 1 + rng() % 6, d = 1 + rng() % 8;
    auto m = oracle::random_matrix(h * w, d, rng);
    auto up = resample_tokens(m, h, w, 2 * h, 2 * w);
    ASSERT_TRUE(bytes_equal(resample_tokens(up, 2 * h, 2 * w, h, w), m));
  }
}

TEST(RmsNormalize, UnitRmsAndZeroRows) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    auto m = oracle::random_matrix(1 + rng() % 8, 1 + rng() % 32, rng, 10.0);
    for (float& v : m.row(0)) v = 0.0f;
    auto n = rms_normalize_rows(m);
    for (float v : n.row(0)) ASSERT_EQ(v, 0.0f);
    for (std::size_t r = 1; r < n.rows(); ++r) {
      double ss = 0.0;
      for (float v : n.row(r)) ss += static_cast<double>(v) * v;
      ASSERT_NEAR(ss / static_cast<double>(n.cols()), 1.0, 1e-5);
    }
  }
}

TEST(RandomOrthogonal, IsOrthonormalAndSeeded) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::size_t n = 1 + seed % 24;
    auto q = random_orthogonal(n, seed);
    auto g = oracle::matmul(transpose(q), q);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(g[i * n + j], i == j ? 1.0 : 0.0, 1e-5);
  }
  EXPECT_TRUE(bytes_equal(random_orthogonal(8, 3), random_orthogonal(8, 3)));
  EXPECT_FALSE(bytes_equal(random_orthogonal(8, 3), random_orthogonal(8, 4)));
}

TEST(Hashing, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a({}), 0xcbf29ce484222325ULL);
  const unsigned char a[] = {'a'};
  EXPECT_EQ(fnv1a(a), 0xaf63dc4c8601ec8cULL);
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
}
