#pragma once

// Declarative run configuration: one JSON file with optional sections
//   {"encoder": {...}, "train": {...}, "sampler": {...}, "synth": {...}}

#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rexpath/encoder.hpp"
#include "rexpath/harness.hpp"
#include "rexpath/synthetic.hpp"

namespace rexpath {

struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  std::optional<SynthConfig> synth;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::kInvalidConfig, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw Error(ErrorKind::kInvalidConfig, "unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"lr", t.optim.lr},
          {"beta1", t.optim.beta1},
          {"beta2", t.optim.beta2},
          {"adam_eps", t.optim.eps},
          {"weight_decay", t.optim.weight_decay},
          {"batch_size", t.batch_size},
          {"max_steps", t.max_steps},
          {"eval_every", t.eval_every},
          {"warmup_steps", t.warmup_steps},
          {"clip_norm", t.clip_norm},
          {"val_fraction", t.val_fraction},
          {"threshold", t.threshold},
          {"stop_at_val_f1", t.stop_at_val_f1},
          {"min_word_freq", t.min_word_freq},
          {"min_word_websites", t.min_word_websites},
          {"max_nodes", t.max_nodes},
          {"seed", t.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
  detail::reject_unknown(j,
                         {"lr", "beta1", "beta2", "adam_eps", "weight_decay", "batch_size", "max_steps", "eval_every",
                          "warmup_steps", "clip_norm", "val_fraction", "threshold", "stop_at_val_f1", "min_word_freq", "min_word_websites",
                          "max_nodes", "seed"},
                         "train");
  t.optim.lr = j.value("lr", t.optim.lr);
  t.optim.beta1 = j.value("beta1", t.optim.beta1);
  t.optim.beta2 = j.value("beta2", t.optim.beta2);
  t.optim.eps = j.value("adam_eps", t.optim.eps);
  t.optim.weight_decay = j.value("weight_decay", t.optim.weight_decay);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.max_steps = j.value("max_steps", t.max_steps);
  t.eval_every = j.value("eval_every", t.eval_every);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.clip_norm = j.value("clip_norm", t.clip_norm);
  t.val_fraction = j.value("val_fraction", t.val_fraction);
  t.threshold = j.value("threshold", t.threshold);
  t.stop_at_val_f1 = j.value("stop_at_val_f1", t.stop_at_val_f1);
  t.min_word_freq = j.value("min_word_freq", t.min_word_freq);
  t.min_word_websites = j.value("min_word_websites", t.min_word_websites);
  t.max_nodes = j.value("max_nodes", t.max_nodes);
  t.seed = j.value("seed", t.seed);
  return t;
}

inline SamplerConfig sampler_config_from_json(const nlohmann::json& j, SamplerConfig s = {}) {
  detail::reject_unknown(j, {"eta", "mu", "seed"}, "sampler");
  s.eta = j.value("eta", s.eta);
  if (j.contains("mu")) {
    const auto& mu = j.at("mu");
    s.mu = mu.is_string() ? Ratio::parse(mu.get<std::string>()) : Ratio::parse(std::to_string(mu.get<double>()));
  }
  s.seed = j.value("seed", s.seed);
  return s;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"encoder", "train", "sampler", "synth"}, "config");
  RunConfig c;
  try {
    if (j.contains("encoder")) {
      detail::reject_unknown(j.at("encoder"),
                             {"d_model", "n_heads", "n_layers", "alpha", "beta", "d_ff", "tag_emb_dim", "xpath_len",
                              "rel_half_len", "max_depth_bucket", "tau", "max_tokens", "dropout", "use_popularity"},
                             "encoder");
      c.encoder = EncoderConfig::from_json(j.at("encoder"));
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("sampler")) c.train.sampler = sampler_config_from_json(j.at("sampler"));
    if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("config: ") + e.what());
  }
  // vocab_size is only known after the vocabulary is built; check the rest.
  EncoderConfig probe = c.encoder;
  probe.vocab_size = std::max(probe.vocab_size, 4);
  probe.validate();
  c.train.validate();
  return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json enc = c.encoder.to_json();
  enc.erase("vocab_size");
  enc.erase("num_tags");
  nlohmann::json j = {{"encoder", enc},
                      {"train", train_config_to_json(c.train)},
                      {"sampler", {{"eta", c.train.sampler.eta}, {"mu", c.train.sampler.mu.str()}, {"seed", c.train.sampler.seed}}}};
  if (c.synth) j["synth"] = synth_config_to_json(*c.synth);
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::kInvalidConfig, "config " + path + " is not valid JSON");
  return run_config_from_json(j);
}

}  // namespace rexpath
