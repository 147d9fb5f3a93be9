#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rexpath/common.hpp"
#include "rexpath/dom.hpp"

namespace rexpath {

// Per-website page counts of each normalized text string.
struct PopularityIndex {
  std::string website_id;
  int num_pages = 0;
  std::unordered_map<std::string, int> counts;

  // Texts never seen in the website count as appearing on one page.
  int pop(const std::string& text) const {
    auto it = counts.find(text);
    return it == counts.end() ? 1 : it->second;
  }
};

inline PopularityIndex build_index(const std::vector<const PageRecord*>& pages) {
  PopularityIndex index;
  if (pages.empty()) return index;
  index.website_id = pages.front()->website_id;
  index.num_pages = static_cast<int>(pages.size());
  for (const PageRecord* page : pages) {
    if (page->website_id != index.website_id) {
      throw Error(ErrorKind::kMixedWebsites,
                  "pages from " + index.website_id + " and " + page->website_id);
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& node : page->nodes) {
      if (seen.insert(node.text).second) ++index.counts[node.text];
    }
  }
  return index;
}

inline PopularityIndex build_index(const std::vector<PageRecord>& pages) {
  std::vector<const PageRecord*> ptrs;
  ptrs.reserve(pages.size());
  for (const auto& p : pages) ptrs.push_back(&p);
  return build_index(ptrs);
}

// floor(tau * ln(pop) / ln(N)) clamped to [0, tau]; 0 for single-page sites.
// Exact ratios such as ln 2 / ln 32 land a hair below the integer in double
// arithmetic, hence the 1e-9 nudge before flooring.
inline int pop_bucket(int pop, int num_pages, int tau) {
  if (num_pages <= 1 || pop <= 1) return 0;
  const double ratio = std::log(static_cast<double>(pop)) / std::log(static_cast<double>(num_pages));
  const int bucket = static_cast<int>(std::floor(tau * ratio + 1e-9));
  return std::clamp(bucket, 0, tau);
}

// Sidecar: a "# website=<id> pages=<N>" header, then "<count>\t<text>" lines
// sorted by text.
inline void write_popularity(const PopularityIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << "# website=" << index.website_id << " pages=" << index.num_pages << '\n';
  std::map<std::string, int> sorted(index.counts.begin(), index.counts.end());
  for (const auto& [text, count] : sorted) out << count << '\t' << text << '\n';
}

inline PopularityIndex read_popularity(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  PopularityIndex index;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# website=", 0) != 0) {
    throw Error(ErrorKind::kIo, "missing popularity header in " + path);
  }
  const auto pages_at = line.rfind(" pages=");
  index.website_id = line.substr(10, pages_at - 10);
  index.num_pages = std::stoi(line.substr(pages_at + 7));
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    index.counts[line.substr(tab + 1)] = std::stoi(line.substr(0, tab));
  }
  return index;
}

}  // namespace rexpath
