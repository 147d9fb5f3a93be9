#pragma once

// Training, evaluation and the zero-shot / ablation drivers.

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/corpus.hpp"
#include "rexpath/featurize.hpp"
#include "rexpath/metrics.hpp"
#include "rexpath/model.hpp"
#include "rexpath/optimizer.hpp"
#include "rexpath/pair_extractor.hpp"
#include "rexpath/popularity.hpp"

namespace rexpath {

struct TrainConfig {
  AdamWConfig optim;
  SamplerConfig sampler;
  int batch_size = 4;
  int max_steps = 2000;
  int eval_every = 100;
  int warmup_steps = 0;
  double clip_norm = 1.0;
  double val_fraction = 0.1;  // per website
  double threshold = 0.5;
  double stop_at_val_f1 = 2.0;  // > 1 disables early stopping
  int min_word_freq = 2;
  int min_word_websites = 2;  // site-local words cannot transfer to unseen websites
  int max_nodes = 300;
  std::uint64_t seed = 13;
  bool verbose = false;

  void validate() const {
    sampler.validate();
    auto fail = [](const std::string& m) { throw Error(ErrorKind::kInvalidConfig, m); };
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (max_steps < 1) fail("max_steps must be >= 1");
    if (eval_every < 1) fail("eval_every must be >= 1");
    if (!(optim.lr >= 0.0)) fail("learning rate must be non-negative");
    if (val_fraction < 0.0 || val_fraction >= 1.0) fail("val_fraction must be in [0, 1)");
    if (threshold <= 0.0 || threshold >= 1.0) fail("threshold must be in (0, 1)");
    if (max_nodes < 2) fail("max_nodes must be >= 2");
  }
};

// One popularity index per website of the corpus.
inline std::map<std::string, PopularityIndex> website_indexes(const Corpus& corpus) {
  std::map<std::string, PopularityIndex> out;
  for (const auto& [site, pages] : corpus.pages_by_website()) out.emplace(site, build_index(pages));
  return out;
}

inline std::vector<EncodedExample> featurize_corpus(const Corpus& corpus, const Vocab& vocab, const FeatureConfig& cfg) {
  const auto indexes = website_indexes(corpus);
  std::vector<EncodedExample> out(corpus.pages.size());
  parallel_for(corpus.pages.size(), [&](std::size_t i) {
    const PageRecord& page = corpus.pages[i];
    out[i] = featurize_page(page, corpus.gold_for(page.page_id), vocab, indexes.at(page.website_id), cfg);
  });
  return out;
}

// Per-website validation hold-out: round(fraction * pages), at least one page
// when the website has two or more pages and fraction > 0.
inline std::pair<Corpus, Corpus> split_validation(const Corpus& corpus, double fraction, std::uint64_t seed) {
  Corpus train, val;
  train.provenance = val.provenance = corpus.provenance;
  std::set<std::string> held;
  for (const auto& [site, pages] : corpus.pages_by_website()) {
    std::size_t k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pages.size())));
    if (fraction > 0.0 && k == 0 && pages.size() >= 2) k = 1;
    if (k >= pages.size()) k = pages.size() - 1;
    std::vector<const PageRecord*> order = pages;
    Rng rng(mix_seed(seed, fnv1a(site)));
    shuffle_in_place(order, rng);
    for (std::size_t i = 0; i < k; ++i) held.insert(order[i]->page_id);
  }
  for (const auto& p : corpus.pages) {
    Corpus& dst = held.count(p.page_id) ? val : train;
    dst.pages.push_back(p);
    if (auto it = corpus.gold.find(p.page_id); it != corpus.gold.end()) dst.gold[p.page_id] = it->second;
  }
  return {std::move(train), std::move(val)};
}

// Predicted pairs for one encoded page, as node ids of the page.
template <typename S>
std::vector<PairLabel> predict(const Model<S>& model, const EncodedExample& ex, double threshold,
                               std::vector<PairScore>* scores = nullptr, std::size_t* scored = nullptr) {
  std::vector<PairLabel> out;
  if (ex.num_nodes() < 2) return out;
  const Mat<S> h = model.hidden(ex);
  auto found = decode(model.biaffine, model.params, ex, h, threshold, scored);
  for (const auto& f : found) out.push_back({ex.page_id, f.subject, f.object, true});
  if (scores) *scores = std::move(found);
  return out;
}

// Scores encoded pages against `corpus` gold (recall counts pairs that were
// lost to truncation).
template <typename S>
EvalReport evaluate_examples(const Model<S>& model, const Corpus& corpus, const std::vector<EncodedExample>& examples,
                             double threshold) {
  std::vector<Prf> counts(examples.size());
  std::vector<std::size_t> scored(examples.size(), 0);
  parallel_for(examples.size(), [&](std::size_t i) {
    counts[i] = score_page(predict(model, examples[i], threshold, nullptr, &scored[i]), corpus.gold_for(examples[i].page_id));
  });
  EvalReport report;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    report.add_page(corpus.pages[i], counts[i]);
    report.dropped_gold += examples[i].dropped_gold;
    report.scored_pairs += static_cast<long>(scored[i]);
  }
  return report;
}

// Zero-shot evaluation. Popularity is computed from the test websites' own
// pages; any website seen in training is refused.
template <typename S>
EvalReport evaluate(const Model<S>& model, const Corpus& test, double threshold = 0.5, bool allow_seen = false) {
  if (!allow_seen) {
    const auto sites = test.websites();
    for (const auto& w : model.train_websites) {
      if (sites.count(w)) throw Error(ErrorKind::kZeroShotLeak, "test website " + w + " was used in training");
    }
  }
  return evaluate_examples(model, test, featurize_corpus(test, model.vocab, model.features()), threshold);
}

struct TrainResult {
  Model<float> model;
  int steps = 0;
  int best_step = 0;
  double best_val_f1 = -1.0;
  double final_loss = 0.0;
  std::vector<std::pair<int, double>> loss_curve;  // (step, mean loss since last eval)
  std::vector<std::pair<int, double>> val_curve;   // (step, validation F1)
  double seconds = 0.0;
};

// Seed for the parameter initialization of a training run.
inline std::uint64_t init_seed(const TrainConfig& tc) { return mix_seed(tc.seed, 0x1417ULL); }

// Trains an encoder + biaffine scorer on `train`. With a validation split
// the returned parameters are those with the best validation F1.
inline TrainResult train_model(const Corpus& corpus, EncoderConfig enc, const TrainConfig& tc) {
  tc.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto [train, val] = split_validation(corpus, tc.val_fraction, tc.seed);

  std::vector<const PageRecord*> train_ptrs = train.page_ptrs();
  Vocab vocab = Vocab::build(train_ptrs, tc.min_word_freq, tc.min_word_websites);
  TrainResult result;
  result.model = Model<float>(enc, std::move(vocab), tc.max_nodes);
  Model<float>& model = result.model;
  model.init(init_seed(tc));
  for (const auto& w : corpus.websites()) model.train_websites.push_back(w);

  // Popularity for training pages comes from every page of the website,
  // validation pages included.
  const auto indexes = website_indexes(corpus);
  const FeatureConfig fc = model.features();
  std::vector<EncodedExample> examples(train.pages.size());
  parallel_for(train.pages.size(), [&](std::size_t i) {
    const PageRecord& p = train.pages[i];
    examples[i] = featurize_page(p, train.gold_for(p.page_id), model.vocab, indexes.at(p.website_id), fc);
  });
  std::vector<EncodedExample> val_examples(val.pages.size());
  parallel_for(val.pages.size(), [&](std::size_t i) {
    const PageRecord& p = val.pages[i];
    val_examples[i] = featurize_page(p, val.gold_for(p.page_id), model.vocab, indexes.at(p.website_id), fc);
  });

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].gold_pairs.empty() && examples[i].num_nodes() >= 2) usable.push_back(i);
  }
  if (usable.empty()) throw Error(ErrorKind::kNoPositives, "no training page has gold pairs");
  if (usable.size() < examples.size()) {
    log_warn("skipping " + std::to_string(examples.size() - usable.size()) + " training pages without gold pairs");
  }

  AdamWConfig oc = tc.optim;
  AdamW<float> opt(model.params, oc);
  std::optional<ParamStore<float>> best;
  std::size_t cursor = usable.size();
  std::uint64_t epoch = 0;
  std::vector<std::size_t> order;
  double loss_acc = 0.0;
  int loss_n = 0;

  for (int step = 1; step <= tc.max_steps; ++step) {
    model.params.zero_grad();
    std::vector<std::pair<std::size_t, std::vector<LabeledPair>>> batch;
    for (int b = 0; b < tc.batch_size; ++b) {
      if (cursor >= usable.size()) {
        order = usable;
        Rng rng(mix_seed(tc.seed, 0xE90C0000ULL + epoch));
        shuffle_in_place(order, rng);
        cursor = 0;
        ++epoch;
      }
      const std::size_t idx = order[cursor++];
      SamplerConfig sc = tc.sampler;
      sc.seed = page_seed(tc.sampler.seed ^ tc.seed, examples[idx].page_id, epoch);
      batch.emplace_back(idx, sample_pairs(examples[idx].gold_pairs, examples[idx].num_nodes(), sc));
    }
    const float weight = 1.0f / static_cast<float>(batch.size());
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const EncodedExample& ex = examples[batch[b].first];
      ForwardOptions fo{true, mix_seed(tc.seed, static_cast<std::uint64_t>(step) * 131 + b)};
      const auto cache = model.encoder.forward(model.params, ex, fo);
      Mat<float> dh = Mat<float>::Zero(cache.out.rows(), cache.out.cols());
      batch_loss += pair_loss(model.biaffine, model.params, ex, cache.out, batch[b].second, &dh, weight).loss;
      model.encoder.backward(model.params, ex, cache, dh);
    }
    batch_loss /= static_cast<double>(batch.size());
    clip_grad_norm(model.params, tc.clip_norm);
    oc.lr = tc.warmup_steps > 0 && step <= tc.warmup_steps ? tc.optim.lr * step / tc.warmup_steps : tc.optim.lr;
    opt.set_lr(oc.lr);
    opt.step(model.params);
    loss_acc += batch_loss;
    ++loss_n;
    result.final_loss = batch_loss;
    result.steps = step;

    const bool last = step == tc.max_steps;
    if (step % tc.eval_every == 0 || last) {
      result.loss_curve.emplace_back(step, loss_acc / loss_n);
      loss_acc = 0.0;
      loss_n = 0;
      if (!val_examples.empty()) {
        const double f1 = evaluate_examples(model, val, val_examples, tc.threshold).overall.f1();
        result.val_curve.emplace_back(step, f1);
        if (f1 > result.best_val_f1) {
          result.best_val_f1 = f1;
          result.best_step = step;
          best = model.params;
        }
        if (tc.verbose) {
          log_info("step " + std::to_string(step) + " loss " + std::to_string(result.loss_curve.back().second) +
                   " val_f1 " + std::to_string(f1));
        }
        if (f1 >= tc.stop_at_val_f1) break;
      } else if (tc.verbose) {
        log_info("step " + std::to_string(step) + " loss " + std::to_string(result.loss_curve.back().second));
      }
    }
  }
  if (best) {
    model.params.assign_values(*best);
  } else {
    result.best_step = result.steps;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

enum class Variant { kFull, kNoRelXPath, kNoRelXPathNoPop };

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_relxpath") return Variant::kNoRelXPath;
  if (s == "no_relxpath_no_pop") return Variant::kNoRelXPathNoPop;
  throw Error(ErrorKind::kInvalidConfig, "unknown variant '" + s + "' (full, no_relxpath, no_relxpath_no_pop)");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoRelXPath: return "no_relxpath";
    case Variant::kNoRelXPathNoPop: return "no_relxpath_no_pop";
  }
  return "full";
}

// Without relative paths every layer uses the prefix bias.
inline EncoderConfig apply_variant(EncoderConfig cfg, Variant v) {
  if (v != Variant::kFull) {
    cfg.alpha = cfg.n_layers;
    cfg.beta = 0;
  }
  if (v == Variant::kNoRelXPathNoPop) cfg.use_popularity = false;
  return cfg;
}

struct ZeroShotResult {
  TrainResult training;
  EvalReport test;
};

inline ZeroShotResult run_zero_shot(const Corpus& corpus, const std::string& test_vertical, const EncoderConfig& enc,
                                    const TrainConfig& tc, Variant variant = Variant::kFull) {
  auto [train, test] = split_zero_shot(corpus, test_vertical);
  ZeroShotResult r;
  r.training = train_model(train, apply_variant(enc, variant), tc);
  r.test = evaluate(r.training.model, test, tc.threshold);
  return r;
}

}  // namespace rexpath
