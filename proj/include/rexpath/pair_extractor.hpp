#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "rexpath/common.hpp"
#include "rexpath/corpus.hpp"
#include "rexpath/featurize.hpp"
#include "rexpath/params.hpp"
#include "rexpath/tensor.hpp"

namespace rexpath {

// Positive:negative ratio kept as an exact fraction so the budget
// arithmetic never rounds the wrong way.
struct Ratio {
  long num = 1;
  long den = 5;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  // "1/5", "0.2" or "3".
  static Ratio parse(const std::string& s) {
    Ratio r;
    if (auto slash = s.find('/'); slash != std::string::npos) {
      r.num = std::stol(s.substr(0, slash));
      r.den = std::stol(s.substr(slash + 1));
    } else {
      const double v = std::stod(s);
      r.den = 1000000;
      r.num = std::lround(v * static_cast<double>(r.den));
      const long g = std::gcd(r.num, r.den);
      if (g > 0) {
        r.num /= g;
        r.den /= g;
      }
    }
    if (r.num <= 0 || r.den <= 0) throw Error(ErrorKind::kInvalidConfig, "ratio must be positive: " + s);
    return r;
  }

  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
};

struct SamplerConfig {
  int eta = 100;       // total pairs per page
  Ratio mu{1, 5};      // #pos : #neg
  std::uint64_t seed = 0;

  void validate() const {
    if (eta < 2) throw Error(ErrorKind::kInvalidConfig, "eta must be >= 2");
    if (mu.num <= 0 || mu.den <= 0) throw Error(ErrorKind::kInvalidConfig, "mu must be positive");
  }

  // round(eta * mu / (1 + mu)), halves rounded up.
  int target_positives() const {
    const long n = static_cast<long>(eta) * mu.num;
    const long d = mu.num + mu.den;
    return static_cast<int>((2 * n + d) / (2 * d));
  }
};

struct SampleCounts {
  int positives = 0;
  int negatives = 0;
};

// #Pos = min(|gold|, P_t); #Neg = min(floor(#Pos / mu), eta - #Pos, available).
inline SampleCounts sample_counts(int gold, long available_negatives, const SamplerConfig& cfg) {
  SampleCounts c;
  c.positives = std::min(gold, cfg.target_positives());
  const long ratio_cap = static_cast<long>(c.positives) * cfg.mu.den / cfg.mu.num;
  c.negatives = static_cast<int>(std::min({ratio_cap, static_cast<long>(cfg.eta - c.positives), available_negatives}));
  return c;
}

struct LabeledPair {
  int subject = 0;
  int object = 0;
  bool positive = false;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

inline std::uint64_t page_seed(std::uint64_t global_seed, const std::string& page_id, std::uint64_t round = 0) {
  return mix_seed(mix_seed(global_seed, fnv1a(page_id)), round);
}

// Samples labeled ordered pairs over `num_nodes` nodes. Deterministic in
// (gold, num_nodes, cfg). Throws NoPositives when gold is empty.
inline std::vector<LabeledPair> sample_pairs(const std::vector<PairLabel>& gold, int num_nodes,
                                             const SamplerConfig& cfg) {
  cfg.validate();
  if (num_nodes < 2) throw Error(ErrorKind::kNoPositives, "page has fewer than two nodes");
  if (gold.empty()) throw Error(ErrorKind::kNoPositives, "page has no gold pairs");
  Rng rng(cfg.seed);

  std::vector<std::pair<int, int>> positives;
  std::unordered_set<long long> gold_keys;
  const auto key = [num_nodes](int s, int o) { return static_cast<long long>(s) * num_nodes + o; };
  for (const auto& g : gold) {
    if (gold_keys.insert(key(g.subject, g.object)).second) positives.emplace_back(g.subject, g.object);
  }
  const long ordered = static_cast<long>(num_nodes) * (num_nodes - 1);
  const SampleCounts counts = sample_counts(static_cast<int>(positives.size()), ordered - static_cast<long>(positives.size()), cfg);

  std::vector<LabeledPair> out;
  // Partial Fisher-Yates for the positives.
  for (int i = 0; i < counts.positives; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + uniform_index(rng, positives.size() - static_cast<std::size_t>(i));
    std::swap(positives[static_cast<std::size_t>(i)], positives[j]);
    out.push_back({positives[static_cast<std::size_t>(i)].first, positives[static_cast<std::size_t>(i)].second, true});
  }

  const long available = ordered - static_cast<long>(positives.size());
  if (counts.negatives * 4L >= available) {
    // Dense case: enumerate and shuffle.
    std::vector<std::pair<int, int>> pool;
    for (int s = 0; s < num_nodes; ++s) {
      for (int o = 0; o < num_nodes; ++o) {
        if (s != o && !gold_keys.count(key(s, o))) pool.emplace_back(s, o);
      }
    }
    for (int i = 0; i < counts.negatives; ++i) {
      const std::size_t j = static_cast<std::size_t>(i) + uniform_index(rng, pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      out.push_back({pool[static_cast<std::size_t>(i)].first, pool[static_cast<std::size_t>(i)].second, false});
    }
  } else {
    std::unordered_set<long long> taken;
    while (static_cast<int>(taken.size()) < counts.negatives) {
      const int s = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_nodes)));
      const int o = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_nodes)));
      if (s == o || gold_keys.count(key(s, o)) || !taken.insert(key(s, o)).second) continue;
      out.push_back({s, o, false});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Biaffine scorer: u^T M v + W [u; v] + b

template <typename S>
class Biaffine {
 public:
  using Handle = typename ParamStore<S>::Handle;

  Biaffine() = default;
  Biaffine(int d_model, ParamStore<S>& store) : d_(d_model) {
    m_ = store.add("biaffine.M", d_model, d_model);
    w_ = store.add("biaffine.W", 1, 2 * d_model);
    b_ = store.add("biaffine.b", 1, 1, false);
  }

  void init(ParamStore<S>& store, Rng& rng) const {
    truncated_normal_fill(store.value(m_), rng, 0.02);
    truncated_normal_fill(store.value(w_), rng, 0.02);
    store.value(b_).setZero();
  }

  S score(const ParamStore<S>& store, const RowVec<S>& u, const RowVec<S>& v) const {
    const Mat<S>& w = store.value(w_);
    return u.dot(store.value(m_) * v.transpose()) + w.leftCols(d_).row(0).dot(u) +
           w.rightCols(d_).row(0).dot(v) + store.value(b_)(0, 0);
  }

  // All ordered node pairs at once: logits(i, j) = score(h_i, h_j).
  Mat<S> score_all(const ParamStore<S>& store, const Mat<S>& nodes) const {
    const Mat<S>& w = store.value(w_);
    Mat<S> logits = (nodes * store.value(m_)) * nodes.transpose();
    const Vec<S> left = nodes * w.leftCols(d_).row(0).transpose();
    const Vec<S> right = nodes * w.rightCols(d_).row(0).transpose();
    logits.colwise() += left;
    logits.rowwise() += right.transpose();
    logits.array() += store.value(b_)(0, 0);
    return logits;
  }

  // Accumulates parameter gradients for dL/dlogit = g; returns (dL/du, dL/dv).
  std::pair<RowVec<S>, RowVec<S>> backward(ParamStore<S>& store, const RowVec<S>& u, const RowVec<S>& v, S g) const {
    const Mat<S>& m = store.value(m_);
    const Mat<S>& w = store.value(w_);
    store.grad(m_).noalias() += g * (u.transpose() * v);
    store.grad(w_).leftCols(d_).row(0) += g * u;
    store.grad(w_).rightCols(d_).row(0) += g * v;
    store.grad(b_)(0, 0) += g;
    RowVec<S> du = g * (v * m.transpose() + w.leftCols(d_).row(0));
    RowVec<S> dv = g * (u * m + w.rightCols(d_).row(0));
    return {du, dv};
  }

  Handle m() const { return m_; }
  Handle w() const { return w_; }
  Handle b() const { return b_; }

 private:
  int d_ = 0;
  Handle m_{}, w_{}, b_{};
};

template <typename S>
S sigmoid(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

// log(1 + e^z) without overflow.
template <typename S>
S softplus(S z) {
  return z > S(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Binary cross-entropy of one logit against its label.
template <typename S>
S bce_with_logit(S logit, bool positive) {
  return positive ? softplus(-logit) : softplus(logit);
}

// First-token hidden state of every node.
template <typename S>
Mat<S> node_states(const EncodedExample& ex, const Mat<S>& hidden) {
  Mat<S> out(ex.num_nodes(), hidden.cols());
  for (int i = 0; i < ex.num_nodes(); ++i) out.row(i) = hidden.row(ex.node_spans[static_cast<std::size_t>(i)].first);
  return out;
}

struct LossResult {
  double loss = 0.0;
  std::size_t pairs = 0;
};

// Mean BCE over `pairs`. When `dhidden` is given, parameter gradients are
// accumulated (scaled by `weight`) and dL/dhidden is added to it.
template <typename S>
LossResult pair_loss(const Biaffine<S>& scorer, ParamStore<S>& store, const EncodedExample& ex,
                     const Mat<S>& hidden, const std::vector<LabeledPair>& pairs, Mat<S>* dhidden = nullptr,
                     S weight = S(1)) {
  LossResult r;
  r.pairs = pairs.size();
  if (pairs.empty()) return r;
  const S inv = weight / static_cast<S>(pairs.size());
  S total = S(0);
  for (const auto& p : pairs) {
    const int ts = ex.node_spans[static_cast<std::size_t>(p.subject)].first;
    const int to = ex.node_spans[static_cast<std::size_t>(p.object)].first;
    const RowVec<S> u = hidden.row(ts);
    const RowVec<S> v = hidden.row(to);
    const S z = scorer.score(store, u, v);
    total += bce_with_logit(z, p.positive);
    if (dhidden) {
      const S g = (sigmoid(z) - (p.positive ? S(1) : S(0))) * inv;
      auto [du, dv] = scorer.backward(store, u, v, g);
      dhidden->row(ts) += du;
      dhidden->row(to) += dv;
    }
  }
  r.loss = static_cast<double>(total) / static_cast<double>(pairs.size());
  if (!std::isfinite(r.loss)) throw Error(ErrorKind::kNonFinite, "pair loss on page " + ex.page_id);
  return r;
}

struct PairScore {
  int subject = 0;
  int object = 0;
  double logit = 0.0;
  double probability = 0.5;
};

// Scores every ordered pair of distinct nodes and keeps probability > threshold.
template <typename S>
std::vector<PairScore> decode(const Biaffine<S>& scorer, const ParamStore<S>& store, const EncodedExample& ex,
                              const Mat<S>& hidden, double threshold = 0.5, std::size_t* scored = nullptr) {
  const Mat<S> nodes = node_states(ex, hidden);
  const Mat<S> logits = scorer.score_all(store, nodes);
  std::vector<PairScore> out;
  std::size_t count = 0;
  for (int i = 0; i < ex.num_nodes(); ++i) {
    for (int j = 0; j < ex.num_nodes(); ++j) {
      if (i == j) continue;
      ++count;
      const double z = static_cast<double>(logits(i, j));
      const double prob = sigmoid(z);
      if (prob > threshold) out.push_back({i, j, z, prob});
    }
  }
  if (scored) *scored = count;
  return out;
}

}  // namespace rexpath
