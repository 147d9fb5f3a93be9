#pragma once

// Checkpoint container:
//   line 1  "REXPATH-CHECKPOINT 1"
//   line 2  JSON header (config, vocabulary, hashes, array table)
//   rest    little-endian float64 values of every array, in header order

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/model.hpp"

namespace rexpath {

inline constexpr const char* kCheckpointMagic = "REXPATH-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointExpectations {
  std::optional<std::uint64_t> config_hash;
  std::optional<std::uint64_t> vocab_hash;
};

template <typename S>
void save_checkpoint(const Model<S>& model, const std::string& path, const nlohmann::json& extra = {}) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& p : model.params) arrays.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  nlohmann::json header = {
      {"config", model.config.to_json()},
      {"config_hash", model.config.hash()},
      {"vocab", model.vocab.tokens()},
      {"vocab_hash", model.vocab.hash()},
      {"tag_vocab_hash", TagVocab::standard().hash()},
      {"max_nodes", model.max_nodes},
      {"train_websites", model.train_websites},
      {"arrays", arrays},
      {"extra", extra.is_null() ? nlohmann::json::object() : extra},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const auto& p : model.params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double v = static_cast<double>(p.value.data()[i]);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

// Loads a checkpoint; refuses files whose stored hashes disagree with their
// own contents or with the caller's expectations.
template <typename S>
Model<S> load_checkpoint(const std::string& path, const CheckpointExpectations& expect = {},
                         nlohmann::json* extra = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::string magic_line, header_line;
  std::getline(in, magic_line);
  if (magic_line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion)) {
    throw Error(ErrorKind::kIo, path + " is not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
  }
  std::getline(in, header_line);
  const auto header = nlohmann::json::parse(header_line);

  const EncoderConfig cfg = EncoderConfig::from_json(header.at("config"));
  const Vocab vocab(header.at("vocab").get<std::vector<std::string>>());
  const auto stored_cfg_hash = header.at("config_hash").get<std::uint64_t>();
  const auto stored_vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
  if (cfg.hash() != stored_cfg_hash) throw Error(ErrorKind::kHashMismatch, "config hash does not match stored config");
  if (vocab.hash() != stored_vocab_hash) throw Error(ErrorKind::kHashMismatch, "vocab hash does not match stored vocabulary");
  if (header.at("tag_vocab_hash").get<std::uint64_t>() != TagVocab::standard().hash()) {
    throw Error(ErrorKind::kHashMismatch, "tag vocabulary differs from this build");
  }
  if (expect.config_hash && *expect.config_hash != stored_cfg_hash) {
    throw Error(ErrorKind::kHashMismatch, "checkpoint config differs from the requested config");
  }
  if (expect.vocab_hash && *expect.vocab_hash != stored_vocab_hash) {
    throw Error(ErrorKind::kHashMismatch, "checkpoint vocabulary differs from the requested vocabulary");
  }

  Model<S> model(cfg, vocab, header.value("max_nodes", 300));
  model.train_websites = header.value("train_websites", std::vector<std::string>{});
  const auto& arrays = header.at("arrays");
  if (arrays.size() != model.params.size()) throw Error(ErrorKind::kHashMismatch, "array count mismatch");
  for (const auto& a : arrays) {
    auto& p = model.params.at(a.at("name").get<std::string>());
    if (p.value.rows() != a.at("rows").get<Eigen::Index>() || p.value.cols() != a.at("cols").get<Eigen::Index>()) {
      throw Error(ErrorKind::kHashMismatch, "shape mismatch for " + p.name);
    }
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double v;
      if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorKind::kIo, "truncated checkpoint " + path);
      p.value.data()[i] = static_cast<S>(v);
    }
  }
  if (extra) *extra = header.value("extra", nlohmann::json::object());
  return model;
}

}  // namespace rexpath
