#pragma once

// Common prefixes, lowest common ancestors and directed relative paths
// between two text nodes of the same page.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "rexpath/common.hpp"
#include "rexpath/dom.hpp"

namespace rexpath {

struct CommonPrefix {
  XPath prefix;  // root .. LCA
  int length = 0;
};

// Tag path between two nodes through their LCA, direction a => b.
//   up_tags   = rev(a remainder) then the LCA tag
//   down_tags = the LCA tag then b remainder
//   full      = rev(a remainder), LCA tag, b remainder
struct RelativeXPath {
  int prefix_len = 0;
  std::vector<std::string> up_tags;
  std::vector<std::string> down_tags;
  std::vector<std::string> full;
};

// Number of leading steps equal in both tag and sibling index.
template <typename Step>
int shared_prefix_length(std::span<const Step> a, std::span<const Step> b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::size_t d = 0;
  while (d < n && a[d] == b[d]) ++d;
  return static_cast<int>(d);
}

inline CommonPrefix common_prefix(const XPath& a, const XPath& b) {
  const int d = shared_prefix_length<XPathStep>(a, b);
  if (d == 0) {
    throw Error(ErrorKind::kDisjointRoots,
                "xpaths share no root: " + xpath_to_string(a) + " vs " + xpath_to_string(b));
  }
  return {XPath(a.begin(), a.begin() + d), d};
}

inline RelativeXPath relative_xpath(const XPath& a, const XPath& b) {
  const CommonPrefix cp = common_prefix(a, b);
  const std::size_t d = static_cast<std::size_t>(cp.length);
  const std::string& lca = cp.prefix.back().tag;

  RelativeXPath r;
  r.prefix_len = cp.length;
  for (std::size_t k = a.size(); k-- > d;) r.up_tags.push_back(a[k].tag);
  r.up_tags.push_back(lca);
  r.down_tags.push_back(lca);
  for (std::size_t k = d; k < b.size(); ++k) r.down_tags.push_back(b[k].tag);

  r.full = r.up_tags;
  r.full.insert(r.full.end(), r.down_tags.begin() + 1, r.down_tags.end());
  return r;
}

// Clamp of the prefix length into the bias table; bucket 0 is reserved for
// pairs that involve a special token.
inline int prefix_bucket(int d, int d_max) { return std::min(d, d_max); }

struct FixedHalves {
  std::vector<int> up_ids;
  std::vector<int> down_ids;
};

// Pads each half with PAD to length p, or truncates it keeping the steps
// nearest the text node plus the LCA (last of up, first of down).
inline void fix_up_half(std::span<const int> up, int p, int* out) {
  const std::size_t len = up.size();
  const std::size_t cap = static_cast<std::size_t>(p);
  if (len <= cap) {
    std::copy(up.begin(), up.end(), out);
    std::fill(out + len, out + cap, TagVocab::kPad);
    return;
  }
  std::copy(up.begin(), up.begin() + (cap - 1), out);
  out[cap - 1] = up.back();
}

inline void fix_down_half(std::span<const int> down, int p, int* out) {
  const std::size_t len = down.size();
  const std::size_t cap = static_cast<std::size_t>(p);
  if (len <= cap) {
    std::copy(down.begin(), down.end(), out);
    std::fill(out + len, out + cap, TagVocab::kPad);
    return;
  }
  out[0] = down.front();
  std::copy(down.end() - static_cast<std::ptrdiff_t>(cap - 1), down.end(), out + 1);
}

inline FixedHalves fix_halves(const RelativeXPath& r, int p,
                              const TagVocab& vocab = TagVocab::standard()) {
  std::vector<int> up, down;
  for (const auto& t : r.up_tags) up.push_back(vocab.id(t));
  for (const auto& t : r.down_tags) down.push_back(vocab.id(t));
  FixedHalves h;
  h.up_ids.resize(static_cast<std::size_t>(p));
  h.down_ids.resize(static_cast<std::size_t>(p));
  fix_up_half(up, p, h.up_ids.data());
  fix_down_half(down, p, h.down_ids.data());
  return h;
}

// Allocation-light path used by featurization. Steps are (tag id, sibling
// index) pairs; writes p ids per half and returns the prefix length.
// Paths that share no root (possible only after depth-cap truncation) are
// treated as meeting at a virtual UNK root with prefix length 1.
struct IdStep {
  int tag = 0;
  int index = 1;
  friend bool operator==(const IdStep&, const IdStep&) = default;
};

inline int relative_halves_ids(std::span<const IdStep> a, std::span<const IdStep> b, int p,
                               int* up_out, int* down_out, std::vector<int>& scratch) {
  const int d = shared_prefix_length<IdStep>(a, b);
  const int lca = d > 0 ? a[static_cast<std::size_t>(d - 1)].tag : TagVocab::kUnk;
  scratch.clear();
  for (std::size_t k = a.size(); k-- > static_cast<std::size_t>(d);) scratch.push_back(a[k].tag);
  scratch.push_back(lca);
  fix_up_half(scratch, p, up_out);
  scratch.clear();
  scratch.push_back(lca);
  for (std::size_t k = static_cast<std::size_t>(d); k < b.size(); ++k) scratch.push_back(b[k].tag);
  fix_down_half(scratch, p, down_out);
  return std::max(d, 1);
}

}  // namespace rexpath
