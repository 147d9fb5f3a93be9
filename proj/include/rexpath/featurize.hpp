#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/corpus.hpp"
#include "rexpath/dom.hpp"
#include "rexpath/popularity.hpp"
#include "rexpath/vocab.hpp"
#include "rexpath/xpath_algebra.hpp"

namespace rexpath {

struct FeatureConfig {
  int max_tokens = 128;  // T_max
  int xpath_len = 20;    // n, absolute path pad/truncate length
  int rel_half_len = 5;  // p
  int max_depth_bucket = 25;  // D_max
  int tau = 20;
  int max_nodes = 300;
};

// Encoder-ready page. Surviving nodes are always the first `num_nodes()`
// nodes of the page in document order, so node slot i is node id i.
struct EncodedExample {
  std::string page_id;
  std::string website_id;
  std::string vertical;
  std::vector<int> token_ids;
  std::vector<std::pair<int, int>> node_spans;  // inclusive token range per node
  std::vector<int> abs_xpath_tag_ids;           // num_nodes * xpath_len
  std::vector<int> pop_bucket;                  // per node
  std::vector<int> pair_prefix_bucket;          // num_nodes * num_nodes
  std::vector<int> pair_up_ids;                 // num_nodes * num_nodes * rel_half_len
  std::vector<int> pair_down_ids;               // num_nodes * num_nodes * rel_half_len
  std::vector<PairLabel> gold_pairs;            // positives among surviving nodes
  int xpath_len = 0;
  int rel_half_len = 0;
  int total_gold = 0;    // before truncation
  int dropped_gold = 0;  // lost to truncation
  int dropped_nodes = 0;

  int num_nodes() const { return static_cast<int>(node_spans.size()); }
  int num_tokens() const { return static_cast<int>(token_ids.size()); }

  // Node slot of every token; -1 for CLS/SEP.
  std::vector<int> token_nodes() const {
    std::vector<int> out(token_ids.size(), -1);
    for (int i = 0; i < num_nodes(); ++i) {
      for (int t = node_spans[static_cast<std::size_t>(i)].first; t <= node_spans[static_cast<std::size_t>(i)].second; ++t) {
        out[static_cast<std::size_t>(t)] = i;
      }
    }
    return out;
  }

  int prefix_at(int i, int j) const {
    return pair_prefix_bucket[static_cast<std::size_t>(i * num_nodes() + j)];
  }
  const int* up_at(int i, int j) const {
    return pair_up_ids.data() + static_cast<std::size_t>((i * num_nodes() + j) * rel_half_len);
  }
  const int* down_at(int i, int j) const {
    return pair_down_ids.data() + static_cast<std::size_t>((i * num_nodes() + j) * rel_half_len);
  }

  friend bool operator==(const EncodedExample&, const EncodedExample&) = default;
};

// Absolute path ids: tags padded with PAD at the end, or truncated keeping
// the leaf-side tags.
inline std::vector<int> abs_xpath_ids(const XPath& xpath, int n, const TagVocab& tags = TagVocab::standard()) {
  std::vector<int> out(static_cast<std::size_t>(n), TagVocab::kPad);
  const std::size_t len = xpath.size();
  const std::size_t start = len > static_cast<std::size_t>(n) ? len - static_cast<std::size_t>(n) : 0;
  for (std::size_t k = start; k < len; ++k) out[k - start] = tags.id(xpath[k].tag);
  return out;
}

inline EncodedExample featurize_page(const PageRecord& page, const std::vector<PairLabel>& gold,
                                     const Vocab& vocab, const PopularityIndex& index,
                                     const FeatureConfig& cfg, const TagVocab& tags = TagVocab::standard()) {
  if (!index.website_id.empty() && index.website_id != page.website_id) {
    throw Error(ErrorKind::kMixedWebsites,
                "popularity index for " + index.website_id + " used on page of " + page.website_id);
  }
  EncodedExample ex;
  ex.page_id = page.page_id;
  ex.website_id = page.website_id;
  ex.vertical = page.vertical;
  ex.xpath_len = cfg.xpath_len;
  ex.rel_half_len = cfg.rel_half_len;

  const int limit_nodes = std::min<int>(static_cast<int>(page.nodes.size()), cfg.max_nodes);
  ex.token_ids.push_back(Vocab::kCls);
  int kept = 0;
  for (int i = 0; i < limit_nodes; ++i) {
    const int first = ex.num_tokens();
    if (first >= cfg.max_tokens) break;
    std::vector<int> ids = vocab.encode(page.nodes[static_cast<std::size_t>(i)].text);
    if (ids.empty()) ids.push_back(Vocab::kUnk);
    const int room = cfg.max_tokens - first;
    const int take = std::min<int>(static_cast<int>(ids.size()), room);
    ex.token_ids.insert(ex.token_ids.end(), ids.begin(), ids.begin() + take);
    ex.node_spans.emplace_back(first, first + take - 1);
    ++kept;
    if (ex.num_tokens() < cfg.max_tokens) ex.token_ids.push_back(Vocab::kSep);
  }
  ex.dropped_nodes = static_cast<int>(page.nodes.size()) - kept;

  const int n = kept;
  std::vector<std::vector<IdStep>> id_paths(static_cast<std::size_t>(n));
  ex.abs_xpath_tag_ids.reserve(static_cast<std::size_t>(n * cfg.xpath_len));
  ex.pop_bucket.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const TextNode& node = page.nodes[static_cast<std::size_t>(i)];
    auto ids = abs_xpath_ids(node.xpath, cfg.xpath_len, tags);
    ex.abs_xpath_tag_ids.insert(ex.abs_xpath_tag_ids.end(), ids.begin(), ids.end());
    ex.pop_bucket.push_back(pop_bucket(index.pop(node.text), index.num_pages, cfg.tau));
    for (const auto& st : node.xpath) id_paths[static_cast<std::size_t>(i)].push_back({tags.id(st.tag), st.index});
  }

  const std::size_t nn = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  const std::size_t p = static_cast<std::size_t>(cfg.rel_half_len);
  ex.pair_prefix_bucket.assign(nn, 0);
  ex.pair_up_ids.assign(nn * p, TagVocab::kPad);
  ex.pair_down_ids.assign(nn * p, TagVocab::kPad);
  std::vector<int> scratch;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const std::size_t cell = static_cast<std::size_t>(i * n + j);
      const int d = relative_halves_ids(id_paths[static_cast<std::size_t>(i)], id_paths[static_cast<std::size_t>(j)],
                                        cfg.rel_half_len, ex.pair_up_ids.data() + cell * p,
                                        ex.pair_down_ids.data() + cell * p, scratch);
      ex.pair_prefix_bucket[cell] = prefix_bucket(d, cfg.max_depth_bucket);
    }
  }

  ex.total_gold = static_cast<int>(gold.size());
  for (const auto& g : gold) {
    if (g.subject < n && g.object < n) ex.gold_pairs.push_back(g);
    else ++ex.dropped_gold;
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Line-delimited storage: a header line, then one JSON object per page.

inline constexpr const char* kEncodedMagic = "rexpath-encoded";
inline constexpr int kEncodedVersion = 1;

inline nlohmann::json example_to_json(const EncodedExample& ex) {
  nlohmann::json gold = nlohmann::json::array();
  for (const auto& g : ex.gold_pairs) gold.push_back({g.subject, g.object});
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& [a, b] : ex.node_spans) spans.push_back({a, b});
  return {{"page_id", ex.page_id},
          {"website_id", ex.website_id},
          {"vertical", ex.vertical},
          {"token_ids", ex.token_ids},
          {"node_spans", spans},
          {"abs_xpath_tag_ids", ex.abs_xpath_tag_ids},
          {"pop_bucket", ex.pop_bucket},
          {"pair_prefix_bucket", ex.pair_prefix_bucket},
          {"pair_up_ids", ex.pair_up_ids},
          {"pair_down_ids", ex.pair_down_ids},
          {"gold_pairs", gold},
          {"xpath_len", ex.xpath_len},
          {"rel_half_len", ex.rel_half_len},
          {"total_gold", ex.total_gold},
          {"dropped_gold", ex.dropped_gold},
          {"dropped_nodes", ex.dropped_nodes}};
}

inline EncodedExample example_from_json(const nlohmann::json& j) {
  EncodedExample ex;
  ex.page_id = j.at("page_id").get<std::string>();
  ex.website_id = j.at("website_id").get<std::string>();
  ex.vertical = j.at("vertical").get<std::string>();
  ex.token_ids = j.at("token_ids").get<std::vector<int>>();
  for (const auto& s : j.at("node_spans")) ex.node_spans.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
  ex.abs_xpath_tag_ids = j.at("abs_xpath_tag_ids").get<std::vector<int>>();
  ex.pop_bucket = j.at("pop_bucket").get<std::vector<int>>();
  ex.pair_prefix_bucket = j.at("pair_prefix_bucket").get<std::vector<int>>();
  ex.pair_up_ids = j.at("pair_up_ids").get<std::vector<int>>();
  ex.pair_down_ids = j.at("pair_down_ids").get<std::vector<int>>();
  for (const auto& g : j.at("gold_pairs")) {
    ex.gold_pairs.push_back({ex.page_id, g.at(0).get<int>(), g.at(1).get<int>(), true});
  }
  ex.xpath_len = j.at("xpath_len").get<int>();
  ex.rel_half_len = j.at("rel_half_len").get<int>();
  ex.total_gold = j.at("total_gold").get<int>();
  ex.dropped_gold = j.at("dropped_gold").get<int>();
  ex.dropped_nodes = j.at("dropped_nodes").get<int>();
  return ex;
}

inline void write_examples(const std::vector<EncodedExample>& examples, const std::string& path,
                           std::uint64_t vocab_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << nlohmann::json{{"format", kEncodedMagic}, {"version", kEncodedVersion}, {"vocab_hash", vocab_hash},
                        {"count", examples.size()}}
             .dump()
      << '\n';
  for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
}

inline std::vector<EncodedExample> read_examples(const std::string& path, std::uint64_t* vocab_hash = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kIo, "empty encoded file " + path);
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != kEncodedMagic) {
    throw Error(ErrorKind::kIo, path + " is not an encoded-example file");
  }
  if (header.value("version", 0) != kEncodedVersion) {
    throw Error(ErrorKind::kIo, path + ": unsupported encoded-example version");
  }
  if (vocab_hash) *vocab_hash = header.value("vocab_hash", std::uint64_t{0});
  std::vector<EncodedExample> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(example_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace rexpath
