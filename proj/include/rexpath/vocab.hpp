#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "rexpath/common.hpp"
#include "rexpath/dom.hpp"
#include "rexpath/text.hpp"

namespace rexpath {

// Word vocabulary with reserved ids:
//   0 <pad>, 1 <unk>, 2 <cls> (sequence start), 3 <sep> (node separator).
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab() : Vocab(std::vector<std::string>{}) {}

  explicit Vocab(const std::vector<std::string>& words) {
    tokens_ = {"<pad>", "<unk>", "<cls>", "<sep>"};
    for (const auto& w : words) {
      if (ids_.count(w) == 0 && w != "<pad>" && w != "<unk>" && w != "<cls>" && w != "<sep>") {
        tokens_.push_back(w);
        ids_.emplace(w, 0);
      }
    }
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
  }

  // Corpus-built vocabulary: tokens seen at least min_freq times on at least
  // min_websites distinct websites, ordered by descending frequency then
  // lexicographically. Tokens confined to fewer websites map to <unk>.
  static Vocab build(const std::vector<const PageRecord*>& pages, int min_freq = 2, int min_websites = 1) {
    std::unordered_map<std::string, int> freq;
    std::unordered_map<std::string, std::set<std::string>> sites;
    for (const PageRecord* page : pages) {
      for (const auto& node : page->nodes) {
        for (auto& tok : tokenize_words(node.text)) {
          ++freq[tok];
          if (min_websites > 1) sites[tok].insert(page->website_id);
        }
      }
    }
    std::vector<std::pair<std::string, int>> kept;
    for (auto& [tok, f] : freq) {
      if (f < min_freq) continue;
      if (min_websites > 1 && static_cast<int>(sites[tok].size()) < min_websites) continue;
      kept.emplace_back(tok, f);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> words;
    words.reserve(kept.size());
    for (auto& [tok, f] : kept) words.push_back(tok);
    return Vocab(words);
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : tokenize_words(text)) ids.push_back(id(tok));
    return ids;
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("vocab");
    for (const auto& t : tokens_) h = fnv1a(t + "\n", h);
    return h;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
    for (std::size_t i = 4; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) words.push_back(line);
    }
    return Vocab(words);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace rexpath
