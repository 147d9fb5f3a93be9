#pragma once

#include <string>
#include <vector>

#include "rexpath/encoder.hpp"
#include "rexpath/pair_extractor.hpp"
#include "rexpath/params.hpp"
#include "rexpath/vocab.hpp"

namespace rexpath {

// Encoder + biaffine scorer sharing one parameter store, plus the vocabulary
// and the websites seen during training.
template <typename S>
struct Model {
  EncoderConfig config;
  Vocab vocab;
  int max_nodes = 300;
  ParamStore<S> params;
  Encoder<S> encoder;
  Biaffine<S> biaffine;
  std::vector<std::string> train_websites;

  Model() = default;

  Model(EncoderConfig cfg, Vocab v, int max_nodes_per_page = 300)
      : config(cfg), vocab(std::move(v)), max_nodes(max_nodes_per_page) {
    config.vocab_size = vocab.size();
    config.num_tags = TagVocab::standard().size();
    encoder = Encoder<S>(config, params);
    biaffine = Biaffine<S>(config.d_model, params);
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    encoder.init(params, rng);
    biaffine.init(params, rng);
  }

  FeatureConfig features() const { return config.features(max_nodes); }

  // Evaluation-mode hidden states for one page.
  Mat<S> hidden(const EncodedExample& ex) const { return encoder.forward(params, ex).out; }

  template <typename T>
  Model<T> cast() const {
    Model<T> out(config, vocab, max_nodes);
    out.params.assign_values(params);
    out.train_websites = train_websites;
    return out;
  }
};

}  // namespace rexpath
