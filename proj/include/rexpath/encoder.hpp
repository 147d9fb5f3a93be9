#pragma once

// Transformer encoder over one page. Token embeddings are the sum of word,
// position, absolute-XPath and popularity embeddings. The first `alpha`
// layers add a per-head bias looked up by the prefix length of the two
// tokens' nodes; the next `beta` layers add a directed bias projected from
// the tag embeddings of the relative path between the nodes.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/dom.hpp"
#include "rexpath/featurize.hpp"
#include "rexpath/params.hpp"
#include "rexpath/tensor.hpp"

namespace rexpath {

struct EncoderConfig {
  int vocab_size = 4;
  int num_tags = TagVocab::standard().size();
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 4;
  int alpha = 3;  // prefix-bias layers
  int beta = 1;   // relative-path-bias layers
  int d_ff = 256;
  int tag_emb_dim = 16;    // s
  int xpath_len = 20;      // n
  int rel_half_len = 5;    // p
  int max_depth_bucket = 25;  // D_max
  int tau = 20;
  int max_tokens = 128;    // T_max
  double dropout = 0.0;
  bool use_popularity = true;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::kInvalidConfig, m); };
    if (alpha < 0 || beta < 0 || alpha + beta != n_layers) fail("alpha + beta must equal n_layers");
    if (n_heads < 1 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (vocab_size < 4 || num_tags < 2) fail("vocabulary sizes too small");
    if (d_ff < 1 || tag_emb_dim < 1 || xpath_len < 1 || rel_half_len < 1) fail("dimensions must be positive");
    if (max_depth_bucket < 1 || tau < 1 || max_tokens < 2) fail("bucket counts must be positive");
    if (dropout < 0.0 || dropout >= 1.0) fail("dropout must be in [0, 1)");
  }

  FeatureConfig features(int max_nodes = 300) const {
    return {max_tokens, xpath_len, rel_half_len, max_depth_bucket, tau, max_nodes};
  }

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size}, {"num_tags", num_tags},         {"d_model", d_model},
            {"n_heads", n_heads},       {"n_layers", n_layers},         {"alpha", alpha},
            {"beta", beta},             {"d_ff", d_ff},                 {"tag_emb_dim", tag_emb_dim},
            {"xpath_len", xpath_len},   {"rel_half_len", rel_half_len}, {"max_depth_bucket", max_depth_bucket},
            {"tau", tau},               {"max_tokens", max_tokens},     {"dropout", dropout},
            {"use_popularity", use_popularity}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) { return from_json(j, EncoderConfig()); }

  static EncoderConfig from_json(const nlohmann::json& j, EncoderConfig c) {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.num_tags = j.value("num_tags", c.num_tags);
    c.d_model = j.value("d_model", c.d_model);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.tag_emb_dim = j.value("tag_emb_dim", c.tag_emb_dim);
    c.xpath_len = j.value("xpath_len", c.xpath_len);
    c.rel_half_len = j.value("rel_half_len", c.rel_half_len);
    c.max_depth_bucket = j.value("max_depth_bucket", c.max_depth_bucket);
    c.tau = j.value("tau", c.tau);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.dropout = j.value("dropout", c.dropout);
    c.use_popularity = j.value("use_popularity", c.use_popularity);
    return c;
  }

  // Hash of the architecture-defining fields (dropout excluded).
  std::uint64_t hash() const {
    nlohmann::json j = to_json();
    j.erase("dropout");
    return fnv1a(j.dump());
  }
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

template <typename S>
struct LayerCache {
  int phase = 0;  // 1 prefix bias, 2 relative-path bias
  Mat<S> x, q, k, v, ctx;
  std::vector<Mat<S>> probs;  // per head, T x T
  Mat<S> attn_mask, ffn_mask;  // empty unless dropout is active
  LayerNormCache<S> ln1, ln2;
  Mat<S> y1, u, g;
};

template <typename S>
struct ForwardCache {
  std::vector<int> token_nodes;   // -1 for special tokens
  Mat<S> abs_concat;              // (nodes + 1) x (n * s); last row is the special all-PAD path
  std::vector<int> abs_rows;      // abs row per token
  std::vector<int> pop_rows;      // popularity row per token
  std::vector<Mat<S>> prefix_bias;  // per head, T x T; empty when alpha == 0
  std::vector<Mat<S>> rel_bias;     // per head, T x T; empty when beta == 0
  std::vector<LayerCache<S>> layers;
  Mat<S> h0;
  Mat<S> out;
  int rel_bias_builds = 0;
};

template <typename S>
class Encoder {
 public:
  using Handle = typename ParamStore<S>::Handle;

  struct LayerHandles {
    Handle wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };

  Encoder() = default;

  Encoder(const EncoderConfig& cfg, ParamStore<S>& store) : cfg_(cfg) {
    cfg.validate();
    const int d = cfg.d_model, s = cfg.tag_emb_dim;
    word_emb_ = store.add("embed.word", cfg.vocab_size, d, false);
    pos_emb_ = store.add("embed.position", cfg.max_tokens, d, false);
    // Rows 0..tau are popularity buckets; row tau + 1 serves special tokens.
    pop_emb_ = store.add("embed.popularity", cfg.tau + 2, d, false);
    tag_emb_ = store.add("embed.abs_xpath.tag", cfg.num_tags, s, false);
    abs_proj_w_ = store.add("embed.abs_xpath.proj_w", cfg.xpath_len * s, d);
    abs_proj_b_ = store.add("embed.abs_xpath.proj_b", 1, d, false);
    prefix_table_ = store.add("bias.prefix", cfg.n_heads, cfg.max_depth_bucket + 1, false);
    rel_emb_up_ = store.add("bias.rel.up_tag", cfg.num_tags, s, false);
    rel_emb_down_ = store.add("bias.rel.down_tag", cfg.num_tags, s, false);
    rel_proj_up_ = store.add("bias.rel.up_proj_w", cfg.n_heads, cfg.rel_half_len * s, false);
    rel_proj_up_b_ = store.add("bias.rel.up_proj_b", 1, cfg.n_heads, false);
    rel_proj_down_ = store.add("bias.rel.down_proj_w", cfg.n_heads, cfg.rel_half_len * s, false);
    rel_proj_down_b_ = store.add("bias.rel.down_proj_b", 1, cfg.n_heads, false);
    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerHandles h;
      h.wq = store.add(p + "attn.wq", d, d);
      h.bq = store.add(p + "attn.bq", 1, d, false);
      h.wk = store.add(p + "attn.wk", d, d);
      h.bk = store.add(p + "attn.bk", 1, d, false);
      h.wv = store.add(p + "attn.wv", d, d);
      h.bv = store.add(p + "attn.bv", 1, d, false);
      h.wo = store.add(p + "attn.wo", d, d);
      h.bo = store.add(p + "attn.bo", 1, d, false);
      h.ln1_g = store.add(p + "ln1.gamma", 1, d, false);
      h.ln1_b = store.add(p + "ln1.beta", 1, d, false);
      h.w1 = store.add(p + "ffn.w1", d, cfg.d_ff);
      h.b1 = store.add(p + "ffn.b1", 1, cfg.d_ff, false);
      h.w2 = store.add(p + "ffn.w2", cfg.d_ff, d);
      h.b2 = store.add(p + "ffn.b2", 1, d, false);
      h.ln2_g = store.add(p + "ln2.gamma", 1, d, false);
      h.ln2_b = store.add(p + "ln2.beta", 1, d, false);
      layers_.push_back(h);
    }
  }

  const EncoderConfig& config() const { return cfg_; }

  // Truncated normal (std 0.02) everywhere except the structural bias tables
  // and projections, which start at zero, and layer-norm gains, which start at 1.
  void init(ParamStore<S>& store, Rng& rng) const {
    for (Handle h : {word_emb_, pos_emb_, pop_emb_, tag_emb_, abs_proj_w_, rel_emb_up_, rel_emb_down_}) {
      truncated_normal_fill(store.value(h), rng, 0.02);
    }
    store.value(abs_proj_b_).setZero();
    for (Handle h : {prefix_table_, rel_proj_up_, rel_proj_up_b_, rel_proj_down_, rel_proj_down_b_}) {
      store.value(h).setZero();
    }
    for (const auto& l : layers_) {
      for (Handle h : {l.wq, l.wk, l.wv, l.wo, l.w1, l.w2}) truncated_normal_fill(store.value(h), rng, 0.02);
      for (Handle h : {l.bq, l.bk, l.bv, l.bo, l.b1, l.b2, l.ln1_b, l.ln2_b}) store.value(h).setZero();
      store.value(l.ln1_g).setOnes();
      store.value(l.ln2_g).setOnes();
    }
  }

  // ---------------------------------------------------------------------
  // Forward pieces

  void check_ids(const EncodedExample& ex) const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::kIdOutOfRange, what); };
    if (ex.num_tokens() > cfg_.max_tokens) bad("sequence longer than max_tokens");
    if (ex.xpath_len != cfg_.xpath_len || ex.rel_half_len != cfg_.rel_half_len) bad("feature lengths differ from config");
    for (int t : ex.token_ids) {
      if (t < 0 || t >= cfg_.vocab_size) bad("token id " + std::to_string(t));
    }
    for (int t : ex.abs_xpath_tag_ids) {
      if (t < 0 || t >= cfg_.num_tags) bad("tag id " + std::to_string(t));
    }
    for (int b : ex.pop_bucket) {
      if (b < 0 || b > cfg_.tau) bad("popularity bucket " + std::to_string(b));
    }
    for (int b : ex.pair_prefix_bucket) {
      if (b < 1 || b > cfg_.max_depth_bucket) bad("prefix bucket " + std::to_string(b));
    }
    for (const auto* ids : {&ex.pair_up_ids, &ex.pair_down_ids}) {
      for (int t : *ids) {
        if (t < 0 || t >= cfg_.num_tags) bad("relative tag id " + std::to_string(t));
      }
    }
  }

  // Concatenated tag embeddings of one padded absolute path, projected to d.
  RowVec<S> abs_xpath_embed(const ParamStore<S>& store, std::span<const int> tag_ids) const {
    const int s = cfg_.tag_emb_dim;
    RowVec<S> concat(cfg_.xpath_len * s);
    for (int k = 0; k < cfg_.xpath_len; ++k) {
      concat.segment(k * s, s) = store.value(tag_emb_).row(tag_ids[static_cast<std::size_t>(k)]);
    }
    RowVec<S> out = concat * store.value(abs_proj_w_);
    out += store.value(abs_proj_b_).row(0);
    return out;
  }

  Mat<S> embed(const ParamStore<S>& store, const EncodedExample& ex, ForwardCache<S>& cache) const {
    const int T = ex.num_tokens();
    const int N = ex.num_nodes();
    const int d = cfg_.d_model;
    const int s = cfg_.tag_emb_dim;
    const int n = cfg_.xpath_len;
    cache.token_nodes = ex.token_nodes();

    cache.abs_concat = Mat<S>::Zero(N + 1, n * s);
    for (int i = 0; i <= N; ++i) {
      for (int k = 0; k < n; ++k) {
        const int tag = i < N ? ex.abs_xpath_tag_ids[static_cast<std::size_t>(i * n + k)] : TagVocab::kPad;
        cache.abs_concat.block(i, k * s, 1, s) = store.value(tag_emb_).row(tag);
      }
    }
    const Mat<S> abs = linear(cache.abs_concat, store.value(abs_proj_w_), store.value(abs_proj_b_));

    cache.abs_rows.assign(static_cast<std::size_t>(T), N);
    cache.pop_rows.assign(static_cast<std::size_t>(T), cfg_.tau + 1);
    Mat<S> h(T, d);
    for (int t = 0; t < T; ++t) {
      const int node = cache.token_nodes[static_cast<std::size_t>(t)];
      if (node >= 0) {
        cache.abs_rows[static_cast<std::size_t>(t)] = node;
        cache.pop_rows[static_cast<std::size_t>(t)] = ex.pop_bucket[static_cast<std::size_t>(node)];
      }
      h.row(t) = store.value(word_emb_).row(ex.token_ids[static_cast<std::size_t>(t)]) +
                 store.value(pos_emb_).row(t) + abs.row(cache.abs_rows[static_cast<std::size_t>(t)]);
      if (cfg_.use_popularity) h.row(t) += store.value(pop_emb_).row(cache.pop_rows[static_cast<std::size_t>(t)]);
    }
    return h;
  }

  // bias[h](q, k) = table(h, bucket(node(q), node(k))); bucket 0 for special tokens.
  std::vector<Mat<S>> prefix_bias(const ParamStore<S>& store, const EncodedExample& ex,
                                  const std::vector<int>& token_nodes) const {
    const int T = ex.num_tokens();
    const Mat<S>& table = store.value(prefix_table_);
    std::vector<Mat<S>> out(static_cast<std::size_t>(cfg_.n_heads), Mat<S>(T, T));
    for (int q = 0; q < T; ++q) {
      const int nq = token_nodes[static_cast<std::size_t>(q)];
      for (int k = 0; k < T; ++k) {
        const int nk = token_nodes[static_cast<std::size_t>(k)];
        const int bucket = (nq < 0 || nk < 0) ? 0 : ex.prefix_at(nq, nk);
        for (int h = 0; h < cfg_.n_heads; ++h) out[static_cast<std::size_t>(h)](q, k) = table(h, bucket);
      }
    }
    return out;
  }

  // Per head: tags x p table whose (tag, k) entry is the contribution of
  // `tag` in slot k of a half, i.e. Emb(tag) . proj[h, k*s:(k+1)*s].
  Mat<S> slot_table(const Mat<S>& emb, const Mat<S>& proj, int head) const {
    const int s = cfg_.tag_emb_dim, p = cfg_.rel_half_len;
    Mat<S> w(p, s);
    for (int k = 0; k < p; ++k) w.row(k) = proj.block(head, k * s, 1, s);
    return emb * w.transpose();
  }

  // Node-level directed bias, nodes x nodes per head.
  std::vector<Mat<S>> rel_node_bias(const ParamStore<S>& store, const EncodedExample& ex) const {
    const int N = ex.num_nodes(), p = cfg_.rel_half_len;
    std::vector<Mat<S>> out;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const Mat<S> up = slot_table(store.value(rel_emb_up_), store.value(rel_proj_up_), h);
      const Mat<S> down = slot_table(store.value(rel_emb_down_), store.value(rel_proj_down_), h);
      const S up_b = store.value(rel_proj_up_b_)(0, h);
      const S down_b = store.value(rel_proj_down_b_)(0, h);
      Mat<S> nb(N, N);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
          const int* u = ex.up_at(i, j);
          const int* dn = ex.down_at(i, j);
          S acc = S(0);
          for (int k = 0; k < p; ++k) acc += up(u[k], k);
          S acc2 = S(0);
          for (int k = 0; k < p; ++k) acc2 += down(dn[k], k);
          nb(i, j) = (acc + up_b) + (acc2 + down_b);
        }
      }
      out.push_back(std::move(nb));
    }
    return out;
  }

  std::vector<Mat<S>> rel_xpath_bias(const ParamStore<S>& store, const EncodedExample& ex,
                                     const std::vector<int>& token_nodes) const {
    const int T = ex.num_tokens();
    const auto node_bias = rel_node_bias(store, ex);
    std::vector<Mat<S>> out(static_cast<std::size_t>(cfg_.n_heads), Mat<S>::Zero(T, T));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      auto& b = out[static_cast<std::size_t>(h)];
      const auto& nb = node_bias[static_cast<std::size_t>(h)];
      for (int q = 0; q < T; ++q) {
        const int nq = token_nodes[static_cast<std::size_t>(q)];
        if (nq < 0) continue;
        for (int k = 0; k < T; ++k) {
          const int nk = token_nodes[static_cast<std::size_t>(k)];
          if (nk >= 0) b(q, k) = nb(nq, nk);
        }
      }
    }
    return out;
  }

  Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, Rng& rng) const {
    Mat<S> m(rows, cols);
    const S keep_scale = static_cast<S>(1.0 / (1.0 - cfg_.dropout));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = uniform_unit(rng) < cfg_.dropout ? S(0) : keep_scale;
    }
    return m;
  }

  // One post-LN transformer layer with an additive attention bias per head
  // (`bias` may be null for no bias).
  Mat<S> layer_forward(const ParamStore<S>& store, int l, const Mat<S>& x, const std::vector<Mat<S>>* bias,
                       LayerCache<S>& c, Rng* dropout_rng) const {
    const LayerHandles& w = layers_[static_cast<std::size_t>(l)];
    const int T = static_cast<int>(x.rows());
    const int dh = cfg_.d_model / cfg_.n_heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    c.x = x;
    c.q = linear(x, store.value(w.wq), store.value(w.bq));
    c.k = linear(x, store.value(w.wk), store.value(w.bk));
    c.v = linear(x, store.value(w.wv), store.value(w.bv));
    c.ctx.resize(T, cfg_.d_model);
    c.probs.resize(static_cast<std::size_t>(cfg_.n_heads));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Mat<S> scores = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      if (bias) scores += (*bias)[static_cast<std::size_t>(h)];
      softmax_rows_in_place(scores);
      c.ctx.middleCols(h * dh, dh) = scores * c.v.middleCols(h * dh, dh);
      c.probs[static_cast<std::size_t>(h)] = std::move(scores);
    }
    Mat<S> attn = linear(c.ctx, store.value(w.wo), store.value(w.bo));
    if (dropout_rng) {
      c.attn_mask = dropout_mask(attn.rows(), attn.cols(), *dropout_rng);
      attn.array() *= c.attn_mask.array();
    }
    c.y1 = layer_norm(Mat<S>(x + attn), store.value(w.ln1_g), store.value(w.ln1_b), &c.ln1);
    c.u = linear(c.y1, store.value(w.w1), store.value(w.b1));
    c.g = gelu(c.u);
    Mat<S> ffn = linear(c.g, store.value(w.w2), store.value(w.b2));
    if (dropout_rng) {
      c.ffn_mask = dropout_mask(ffn.rows(), ffn.cols(), *dropout_rng);
      ffn.array() *= c.ffn_mask.array();
    }
    return layer_norm(Mat<S>(c.y1 + ffn), store.value(w.ln2_g), store.value(w.ln2_b), &c.ln2);
  }

  ForwardCache<S> forward(const ParamStore<S>& store, const EncodedExample& ex,
                          const ForwardOptions& opt = {}) const {
    check_ids(ex);
    ForwardCache<S> cache;
    cache.h0 = embed(store, ex, cache);
    if (cfg_.alpha > 0) cache.prefix_bias = prefix_bias(store, ex, cache.token_nodes);
    if (cfg_.beta > 0) {
      cache.rel_bias = rel_xpath_bias(store, ex, cache.token_nodes);
      ++cache.rel_bias_builds;
    }
    Rng rng(opt.dropout_seed);
    Rng* dropout_rng = (opt.training && cfg_.dropout > 0.0) ? &rng : nullptr;
    Mat<S> x = cache.h0;
    cache.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
    for (int l = 0; l < cfg_.n_layers; ++l) {
      auto& lc = cache.layers[static_cast<std::size_t>(l)];
      lc.phase = l < cfg_.alpha ? 1 : 2;
      const auto* bias = lc.phase == 1 ? &cache.prefix_bias : &cache.rel_bias;
      x = layer_forward(store, l, x, bias, lc, dropout_rng);
      if (!x.allFinite()) throw Error(ErrorKind::kNonFinite, "activations at layer " + std::to_string(l));
    }
    cache.out = std::move(x);
    return cache;
  }

  // ---------------------------------------------------------------------
  // Backward: accumulates into store gradients.

  Mat<S> layer_backward(ParamStore<S>& store, int l, const LayerCache<S>& c, const Mat<S>& dout,
                        std::vector<Mat<S>>* dbias) const {
    const LayerHandles& w = layers_[static_cast<std::size_t>(l)];
    const int dh = cfg_.d_model / cfg_.n_heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<S> dr2 = layer_norm_backward(dout, store.value(w.ln2_g), c.ln2, store.grad(w.ln2_g), store.grad(w.ln2_b));
    Mat<S> dffn = dr2;
    if (c.ffn_mask.size()) dffn.array() *= c.ffn_mask.array();
    store.grad(w.w2).noalias() += c.g.transpose() * dffn;
    store.grad(w.b2).row(0) += dffn.colwise().sum();
    Mat<S> du = (dffn * store.value(w.w2).transpose()).array() * gelu_grad(c.u).array();
    store.grad(w.w1).noalias() += c.y1.transpose() * du;
    store.grad(w.b1).row(0) += du.colwise().sum();
    Mat<S> dy1 = dr2;
    dy1.noalias() += du * store.value(w.w1).transpose();

    Mat<S> dr1 = layer_norm_backward(dy1, store.value(w.ln1_g), c.ln1, store.grad(w.ln1_g), store.grad(w.ln1_b));
    Mat<S> dattn = dr1;
    if (c.attn_mask.size()) dattn.array() *= c.attn_mask.array();
    store.grad(w.wo).noalias() += c.ctx.transpose() * dattn;
    store.grad(w.bo).row(0) += dattn.colwise().sum();
    Mat<S> dctx = dattn * store.value(w.wo).transpose();

    const Eigen::Index T = c.x.rows();
    Mat<S> dq(T, cfg_.d_model), dk(T, cfg_.d_model), dv(T, cfg_.d_model);
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const Mat<S>& p = c.probs[static_cast<std::size_t>(h)];
      const auto dctx_h = dctx.middleCols(h * dh, dh);
      Mat<S> dp = dctx_h * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * dctx_h;
      Vec<S> row_dot = (dp.array() * p.array()).rowwise().sum();
      Mat<S> ds = p.array() * (dp.colwise() - row_dot).array();
      if (dbias) (*dbias)[static_cast<std::size_t>(h)] += ds;
      ds *= scale;
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    store.grad(w.wq).noalias() += c.x.transpose() * dq;
    store.grad(w.bq).row(0) += dq.colwise().sum();
    store.grad(w.wk).noalias() += c.x.transpose() * dk;
    store.grad(w.bk).row(0) += dk.colwise().sum();
    store.grad(w.wv).noalias() += c.x.transpose() * dv;
    store.grad(w.bv).row(0) += dv.colwise().sum();

    Mat<S> dx = dr1;
    dx.noalias() += dq * store.value(w.wq).transpose();
    dx.noalias() += dk * store.value(w.wk).transpose();
    dx.noalias() += dv * store.value(w.wv).transpose();
    return dx;
  }

  void backward(ParamStore<S>& store, const EncodedExample& ex, const ForwardCache<S>& cache,
                const Mat<S>& dout) const {
    const int T = ex.num_tokens();
    const int N = ex.num_nodes();
    std::vector<Mat<S>> dprefix(static_cast<std::size_t>(cfg_.n_heads), Mat<S>::Zero(T, T));
    std::vector<Mat<S>> drel(static_cast<std::size_t>(cfg_.n_heads), Mat<S>::Zero(T, T));
    Mat<S> dx = dout;
    for (int l = cfg_.n_layers; l-- > 0;) {
      const auto& lc = cache.layers[static_cast<std::size_t>(l)];
      dx = layer_backward(store, l, lc, dx, lc.phase == 1 ? &dprefix : &drel);
    }

    // Structural biases.
    if (cfg_.alpha > 0) {
      Mat<S>& g = store.grad(prefix_table_);
      for (int q = 0; q < T; ++q) {
        const int nq = cache.token_nodes[static_cast<std::size_t>(q)];
        for (int k = 0; k < T; ++k) {
          const int nk = cache.token_nodes[static_cast<std::size_t>(k)];
          const int bucket = (nq < 0 || nk < 0) ? 0 : ex.prefix_at(nq, nk);
          for (int h = 0; h < cfg_.n_heads; ++h) g(h, bucket) += dprefix[static_cast<std::size_t>(h)](q, k);
        }
      }
    }
    if (cfg_.beta > 0) {
      const int s = cfg_.tag_emb_dim, p = cfg_.rel_half_len;
      for (int h = 0; h < cfg_.n_heads; ++h) {
        Mat<S> dnode = Mat<S>::Zero(N, N);
        const auto& db = drel[static_cast<std::size_t>(h)];
        for (int q = 0; q < T; ++q) {
          const int nq = cache.token_nodes[static_cast<std::size_t>(q)];
          if (nq < 0) continue;
          for (int k = 0; k < T; ++k) {
            const int nk = cache.token_nodes[static_cast<std::size_t>(k)];
            if (nk >= 0) dnode(nq, nk) += db(q, k);
          }
        }
        const S total = dnode.sum();
        store.grad(rel_proj_up_b_)(0, h) += total;
        store.grad(rel_proj_down_b_)(0, h) += total;
        Mat<S> dup = Mat<S>::Zero(cfg_.num_tags, p);
        Mat<S> ddown = Mat<S>::Zero(cfg_.num_tags, p);
        for (int i = 0; i < N; ++i) {
          for (int j = 0; j < N; ++j) {
            const S gij = dnode(i, j);
            const int* u = ex.up_at(i, j);
            const int* dn = ex.down_at(i, j);
            for (int k = 0; k < p; ++k) {
              dup(u[k], k) += gij;
              ddown(dn[k], k) += gij;
            }
          }
        }
        accumulate_slot_grads(store, rel_emb_up_, rel_proj_up_, h, dup, s, p);
        accumulate_slot_grads(store, rel_emb_down_, rel_proj_down_, h, ddown, s, p);
      }
    }

    // Embeddings.
    Mat<S> dabs = Mat<S>::Zero(N + 1, cfg_.d_model);
    for (int t = 0; t < T; ++t) {
      store.grad(word_emb_).row(ex.token_ids[static_cast<std::size_t>(t)]) += dx.row(t);
      store.grad(pos_emb_).row(t) += dx.row(t);
      if (cfg_.use_popularity) store.grad(pop_emb_).row(cache.pop_rows[static_cast<std::size_t>(t)]) += dx.row(t);
      dabs.row(cache.abs_rows[static_cast<std::size_t>(t)]) += dx.row(t);
    }
    store.grad(abs_proj_w_).noalias() += cache.abs_concat.transpose() * dabs;
    store.grad(abs_proj_b_).row(0) += dabs.colwise().sum();
    const Mat<S> dconcat = dabs * store.value(abs_proj_w_).transpose();
    const int s = cfg_.tag_emb_dim, n = cfg_.xpath_len;
    for (int i = 0; i <= N; ++i) {
      for (int k = 0; k < n; ++k) {
        const int tag = i < N ? ex.abs_xpath_tag_ids[static_cast<std::size_t>(i * n + k)] : TagVocab::kPad;
        store.grad(tag_emb_).row(tag) += dconcat.block(i, k * s, 1, s);
      }
    }
  }

  Handle word_emb() const { return word_emb_; }
  Handle pos_emb() const { return pos_emb_; }
  Handle pop_emb() const { return pop_emb_; }
  Handle tag_emb() const { return tag_emb_; }
  Handle abs_proj_w() const { return abs_proj_w_; }
  Handle abs_proj_b() const { return abs_proj_b_; }
  Handle prefix_table() const { return prefix_table_; }
  Handle rel_emb_up() const { return rel_emb_up_; }
  Handle rel_emb_down() const { return rel_emb_down_; }
  Handle rel_proj_up() const { return rel_proj_up_; }
  Handle rel_proj_up_b() const { return rel_proj_up_b_; }
  Handle rel_proj_down() const { return rel_proj_down_; }
  Handle rel_proj_down_b() const { return rel_proj_down_b_; }
  const std::vector<LayerHandles>& layer_handles() const { return layers_; }

 private:
  // d slot_table(tag, k) -> d Emb(tag) and d proj[h, k-block].
  void accumulate_slot_grads(ParamStore<S>& store, Handle emb, Handle proj, int h, const Mat<S>& dslot,
                             int s, int p) const {
    const Mat<S>& e = store.value(emb);
    const Mat<S>& w = store.value(proj);
    Mat<S> wk(p, s);
    for (int k = 0; k < p; ++k) wk.row(k) = w.block(h, k * s, 1, s);
    store.grad(emb).noalias() += dslot * wk;
    const Mat<S> dwk = dslot.transpose() * e;  // p x s
    for (int k = 0; k < p; ++k) store.grad(proj).block(h, k * s, 1, s) += dwk.row(k);
  }

  EncoderConfig cfg_;
  Handle word_emb_{}, pos_emb_{}, pop_emb_{}, tag_emb_{}, abs_proj_w_{}, abs_proj_b_{};
  Handle prefix_table_{}, rel_emb_up_{}, rel_emb_down_{}, rel_proj_up_{}, rel_proj_up_b_{}, rel_proj_down_{},
      rel_proj_down_b_{};
  std::vector<LayerHandles> layers_;
};

}  // namespace rexpath
