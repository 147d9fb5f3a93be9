#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace rexpath;

namespace {

EncoderConfig tiny_config() { return oracle::GradFixture::small_config(); }

struct Tiny {
  EncoderConfig cfg;
  ParamStore<double> store;
  Encoder<double> enc;
  explicit Tiny(EncoderConfig c = tiny_config(), double std = 0.3, std::uint64_t seed = 1) : cfg(c), enc(cfg, store) {
    Rng rng(seed);
    oracle::randomize(store, rng, std);
  }
};

EncodedExample example(const EncoderConfig& cfg, std::uint64_t seed, int max_nodes = 5) {
  Rng rng(seed);
  return oracle::random_example(rng, cfg, max_nodes, 3);
}

}  // namespace

TEST(EncoderConfig, Validation) {
  auto c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.alpha = 2;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_config();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(EncoderConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(EncoderParams, ShapesAndRegistration) {
  EncoderConfig c;
  c.vocab_size = 50;
  ParamStore<float> store;
  Encoder<float> enc(c, store);
  EXPECT_EQ(store.at("embed.abs_xpath.proj_w").value.rows(), 320);
  EXPECT_EQ(store.at("embed.abs_xpath.proj_w").value.cols(), 128);
  EXPECT_EQ(store.at("embed.popularity").value.rows(), c.tau + 2);
  EXPECT_EQ(store.at("bias.prefix").value.rows(), c.n_heads);
  EXPECT_EQ(store.at("bias.prefix").value.cols(), c.max_depth_bucket + 1);
  EXPECT_EQ(store.at("bias.rel.up_proj_w").value.cols(), c.rel_half_len * c.tag_emb_dim);
  for (const auto& p : store) {
    EXPECT_EQ(p.grad.rows(), p.value.rows()) << p.name;
    EXPECT_EQ(p.grad.cols(), p.value.cols()) << p.name;
  }
  Rng rng(3);
  enc.init(store, rng);
  EXPECT_TRUE(store.at("bias.prefix").value.isZero(0));
  EXPECT_TRUE(store.at("bias.rel.up_proj_w").value.isZero(0));
  EXPECT_TRUE(store.at("bias.rel.down_proj_b").value.isZero(0));
  EXPECT_FALSE(store.at("bias.rel.up_tag").value.isZero(0));
  EXPECT_TRUE(store.at("layer0.ln1.gamma").value.isOnes(0));
}

TEST(Embed, ZeroTablesGiveZeroInput) {
  Tiny t;
  for (const char* name : {"embed.word", "embed.position", "embed.popularity", "embed.abs_xpath.tag",
                           "embed.abs_xpath.proj_w", "embed.abs_xpath.proj_b"}) {
    t.store.at(name).value.setZero();
  }
  const auto ex = example(t.cfg, 4);
  ForwardCache<double> cache;
  EXPECT_TRUE(t.enc.embed(t.store, ex, cache).isZero(0));
}

TEST(Embed, TokensOfOneNodeShareStructuralComponents) {
  Tiny t;
  t.store.at("embed.word").value.setZero();
  t.store.at("embed.position").value.setZero();
  EncodedExample ex;
  std::uint64_t seed = 10;
  do {
    ex = example(t.cfg, seed++);
  } while (ex.node_spans[0].second == ex.node_spans[0].first);
  ForwardCache<double> cache;
  const auto h0 = t.enc.embed(t.store, ex, cache);
  const auto [a, b] = ex.node_spans[0];
  EXPECT_EQ(h0.row(a), h0.row(b));
  EXPECT_NE(h0.row(a), h0.row(0));
}

TEST(Embed, AbsXPathIsOrderSensitive) {
  Tiny t;
  const std::vector<int> path{5, 9, 0, 0};
  const std::vector<int> swapped{9, 5, 0, 0};
  EXPECT_NE(t.enc.abs_xpath_embed(t.store, path), t.enc.abs_xpath_embed(t.store, swapped));

  t.store.at("embed.abs_xpath.tag").value.row(TagVocab::kPad).setZero();
  const std::vector<int> pads(4, TagVocab::kPad);
  EXPECT_EQ(t.enc.abs_xpath_embed(t.store, pads), t.store.at("embed.abs_xpath.proj_b").value.row(0));
}

TEST(PrefixBias, SymmetricWithReservedSpecialBucket) {
  Tiny t;
  Rng rng(8);
  auto ex = oracle::random_example(rng, t.cfg, 6, 3);
  // Prefix lengths are symmetric on real pages.
  const int n = ex.num_nodes();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) ex.pair_prefix_bucket[j * n + i] = ex.pair_prefix_bucket[i * n + j];
  }
  const auto nodes = ex.token_nodes();
  const auto bias = t.enc.prefix_bias(t.store, ex, nodes);
  const auto& table = t.store.at("bias.prefix").value;
  for (int h = 0; h < t.cfg.n_heads; ++h) {
    EXPECT_TRUE(bias[h].isApprox(bias[h].transpose(), 0.0));
    EXPECT_EQ(bias[h](0, 0), table(h, 0));
    EXPECT_EQ(bias[h](0, 1), table(h, 0));
    const int q = ex.node_spans[0].first, k = ex.node_spans[1].first;
    EXPECT_EQ(bias[h](q, k), table(h, ex.prefix_at(0, 1)));
  }
  t.store.at("bias.prefix").value.setZero();
  for (const auto& b : t.enc.prefix_bias(t.store, ex, nodes)) EXPECT_TRUE(b.isZero(0));
}

TEST(RelXPathBias, DirectedAndRoleSensitive) {
  Tiny t;
  // A real page so both directions have distinct halves.
  const auto page = parse_page("<body><div><table><tr><td>a</td></tr></table></div><section><p>b</p></section></body>", "p", "w", "v");
  const auto ex = featurize_page(page, {}, Vocab(), build_index(std::vector<PageRecord>{page}), t.cfg.features());
  const auto nodes = ex.token_nodes();
  const auto bias = t.enc.rel_xpath_bias(t.store, ex, nodes);
  const int q = ex.node_spans[0].first, k = ex.node_spans[1].first;
  for (int h = 0; h < t.cfg.n_heads; ++h) {
    EXPECT_NE(bias[h](q, k), bias[h](k, q));
    EXPECT_EQ(bias[h](0, q), 0.0);
    EXPECT_EQ(bias[h](q, 0), 0.0);
  }

  // Swapping the up and down module sets changes the bias.
  Tiny swapped = t;
  std::swap(swapped.store.at("bias.rel.up_tag").value, swapped.store.at("bias.rel.down_tag").value);
  const auto bias2 = swapped.enc.rel_xpath_bias(swapped.store, ex, nodes);
  EXPECT_NE(bias2[0](q, k), bias[0](q, k));

  for (const char* name : {"bias.rel.up_proj_w", "bias.rel.up_proj_b", "bias.rel.down_proj_w", "bias.rel.down_proj_b"}) {
    t.store.at(name).value.setZero();
  }
  for (const auto& b : t.enc.rel_xpath_bias(t.store, ex, nodes)) EXPECT_TRUE(b.isZero(0));
}

// Direct evaluation of b_h(Emb[up]) + b'_h(Emb'[down]) for one node pair.
TEST(RelXPathBias, MatchesDirectFormula) {
  Tiny t;
  Rng rng(12);
  const auto ex = oracle::random_example(rng, t.cfg, 5, 2);
  const auto nb = t.enc.rel_node_bias(t.store, ex);
  const int s = t.cfg.tag_emb_dim, p = t.cfg.rel_half_len;
  const auto& up_tab = t.store.at("bias.rel.up_tag").value;
  const auto& down_tab = t.store.at("bias.rel.down_tag").value;
  for (int h = 0; h < t.cfg.n_heads; ++h) {
    for (int i = 0; i < ex.num_nodes(); ++i) {
      for (int j = 0; j < ex.num_nodes(); ++j) {
        RowVec<double> up(p * s), down(p * s);
        for (int k = 0; k < p; ++k) {
          up.segment(k * s, s) = up_tab.row(ex.up_at(i, j)[k]);
          down.segment(k * s, s) = down_tab.row(ex.down_at(i, j)[k]);
        }
        const double expected = up.dot(t.store.at("bias.rel.up_proj_w").value.row(h)) + t.store.at("bias.rel.up_proj_b").value(0, h) +
                                down.dot(t.store.at("bias.rel.down_proj_w").value.row(h)) + t.store.at("bias.rel.down_proj_b").value(0, h);
        EXPECT_NEAR(nb[h](i, j), expected, 1e-12);
      }
    }
  }
}

TEST(Forward, ShapeSoftmaxAndDeterminism) {
  Tiny t;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ex = example(t.cfg, seed);
    const auto a = t.enc.forward(t.store, ex);
    EXPECT_EQ(a.out.rows(), ex.num_tokens());
    EXPECT_EQ(a.out.cols(), t.cfg.d_model);
    for (const auto& layer : a.layers) {
      for (const auto& p : layer.probs) {
        EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-5);
      }
    }
    const auto b = t.enc.forward(t.store, ex);
    EXPECT_EQ(a.out, b.out);
  }
}

TEST(Forward, PhasesFollowAlphaThenBeta) {
  auto c = tiny_config();
  c.n_layers = 3;
  c.alpha = 2;
  c.beta = 1;
  Tiny t(c);
  const auto cache = t.enc.forward(t.store, example(c, 2));
  ASSERT_EQ(cache.layers.size(), 3u);
  EXPECT_EQ(cache.layers[0].phase, 1);
  EXPECT_EQ(cache.layers[1].phase, 1);
  EXPECT_EQ(cache.layers[2].phase, 2);

  c.alpha = 3;
  c.beta = 0;
  Tiny prefix_only(c);
  const auto cache2 = prefix_only.enc.forward(prefix_only.store, example(c, 2));
  EXPECT_EQ(cache2.rel_bias_builds, 0);
  EXPECT_TRUE(cache2.rel_bias.empty());
}

TEST(Forward, BiasOffEqualsVanillaTransformerBitExactly) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tiny t(tiny_config(), 0.3, seed);
    for (const char* name : {"bias.prefix", "bias.rel.up_proj_w", "bias.rel.up_proj_b", "bias.rel.down_proj_w",
                             "bias.rel.down_proj_b", "bias.rel.up_tag", "bias.rel.down_tag"}) {
      t.store.at(name).value.setZero();
    }
    const auto ex = example(t.cfg, 100 + seed);
    const Mat<double> ours = t.enc.forward(t.store, ex).out;
    const Mat<double> vanilla = oracle::vanilla_forward(t.store, t.cfg, ex);
    ASSERT_EQ(ours.rows(), vanilla.rows());
    EXPECT_TRUE((ours.array() == vanilla.array()).all()) << "max diff " << (ours - vanilla).cwiseAbs().maxCoeff();
  }
}

TEST(Forward, BiasOnDiffersFromVanilla) {
  Tiny t;
  const auto ex = example(t.cfg, 5);
  EXPECT_FALSE(t.enc.forward(t.store, ex).out.isApprox(oracle::vanilla_forward(t.store, t.cfg, ex), 1e-6));
}

TEST(Forward, DropoutOnlyInTrainingMode) {
  auto c = tiny_config();
  c.dropout = 0.3;
  Tiny t(c);
  const auto ex = example(c, 6);
  const auto eval1 = t.enc.forward(t.store, ex).out;
  const auto eval2 = t.enc.forward(t.store, ex, {false, 99}).out;
  EXPECT_EQ(eval1, eval2);
  const auto train1 = t.enc.forward(t.store, ex, {true, 1}).out;
  const auto train1b = t.enc.forward(t.store, ex, {true, 1}).out;
  const auto train2 = t.enc.forward(t.store, ex, {true, 2}).out;
  EXPECT_EQ(train1, train1b);
  EXPECT_NE(train1, eval1);
  EXPECT_NE(train1, train2);
}

TEST(Forward, IdsOutOfRangeRejected) {
  Tiny t;
  auto ex = example(t.cfg, 3);
  auto bad = ex;
  bad.token_ids[1] = t.cfg.vocab_size;
  auto expect_kind = [&](const EncodedExample& e) {
    try {
      t.enc.forward(t.store, e);
      FAIL();
    } catch (const Error& err) {
      EXPECT_EQ(err.kind(), ErrorKind::kIdOutOfRange);
    }
  };
  expect_kind(bad);
  bad = ex;
  bad.pop_bucket[0] = t.cfg.tau + 1;
  expect_kind(bad);
  bad = ex;
  bad.pair_prefix_bucket[0] = 0;
  expect_kind(bad);
  bad = ex;
  bad.pair_up_ids[0] = t.cfg.num_tags;
  expect_kind(bad);
}

TEST(Backward, ZeroUpstreamGradientGivesZeroGradients) {
  Tiny t;
  const auto ex = example(t.cfg, 7);
  const auto cache = t.enc.forward(t.store, ex);
  t.store.zero_grad();
  t.enc.backward(t.store, ex, cache, Mat<double>::Zero(cache.out.rows(), cache.out.cols()));
  EXPECT_EQ(t.store.grad_norm(), 0.0);
}

TEST(Backward, UnusedPopularityRowHasZeroGradient) {
  oracle::GradFixture f(21);
  for (auto& b : f.ex.pop_bucket) b = std::min(b, f.cfg.tau - 1);
  f.analytic();
  const auto& g = f.store.at("embed.popularity").grad;
  EXPECT_TRUE(g.row(f.cfg.tau).isZero(0));
  EXPECT_FALSE(g.row(f.cfg.tau + 1).isZero(0));  // special tokens' row
}

TEST(Backward, FiniteDifferencesOnEveryParameter) {
  oracle::GradFixture f(5);
  ASSERT_EQ(f.ex.num_tokens(), 12);
  const auto checks = f.check_all(1e-5, 24, 77);
  ASSERT_EQ(checks.size(), f.store.size());
  for (const auto& c : checks) {
    EXPECT_LE(c.rel_error, 1e-4) << c.name << " max|g|=" << c.max_abs_analytic << " max err=" << c.max_abs_error;
    EXPECT_GT(c.checked, 0);
  }
}
