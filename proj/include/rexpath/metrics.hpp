#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/corpus.hpp"
#include "rexpath/text.hpp"

namespace rexpath {

// Micro-averaged counts.
struct Prf {
  long tp = 0;
  long predicted = 0;
  long gold = 0;

  double precision() const { return predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0; }
  double recall() const { return gold ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }

  Prf& operator+=(const Prf& o) {
    tp += o.tp;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }

  nlohmann::json to_json() const {
    return {{"tp", tp}, {"predicted", predicted}, {"gold", gold},
            {"precision", precision()}, {"recall", recall()}, {"f1", f1()}};
  }
};

struct EvalReport {
  Prf overall;
  std::map<std::string, Prf> per_vertical;
  std::map<std::string, Prf> per_website;
  long pages = 0;
  long dropped_gold = 0;  // gold pairs the encoder never saw (truncation)
  long scored_pairs = 0;

  void add_page(const PageRecord& page, const Prf& c) {
    overall += c;
    per_vertical[page.vertical] += c;
    per_website[page.website_id] += c;
    ++pages;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = overall.to_json();
    j["pages"] = pages;
    j["dropped_gold"] = dropped_gold;
    j["scored_pairs"] = scored_pairs;
    for (const auto& [k, v] : per_vertical) j["per_vertical"][k] = v.to_json();
    for (const auto& [k, v] : per_website) j["per_website"][k] = v.to_json();
    return j;
  }
};

// Counts one page's predictions against its full gold list.
inline Prf score_page(const std::vector<PairLabel>& predicted, const std::vector<PairLabel>& gold) {
  std::set<std::pair<int, int>> g, p;
  for (const auto& x : gold) {
    if (x.positive) g.emplace(x.subject, x.object);
  }
  for (const auto& x : predicted) p.emplace(x.subject, x.object);
  Prf c;
  c.gold = static_cast<long>(g.size());
  c.predicted = static_cast<long>(p.size());
  for (const auto& x : p) c.tp += g.count(x) ? 1 : 0;
  return c;
}

// Heuristic reference: a node whose text ends in a colon is a key and the
// next node in document order is its value.
inline std::vector<PairLabel> colon_baseline(const PageRecord& page) {
  std::vector<PairLabel> out;
  for (std::size_t i = 0; i + 1 < page.nodes.size(); ++i) {
    const std::string& t = page.nodes[i].text;
    const bool ascii = !t.empty() && t.back() == ':';
    const bool fullwidth = t.size() >= 3 && t.compare(t.size() - 3, 3, "\xEF\xBC\x9A") == 0;
    if (ascii || fullwidth) out.push_back({page.page_id, page.nodes[i].node_id, page.nodes[i + 1].node_id, true});
  }
  return out;
}

inline EvalReport evaluate_colon_baseline(const Corpus& corpus) {
  EvalReport report;
  for (const auto& page : corpus.pages) report.add_page(page, score_page(colon_baseline(page), corpus.gold_for(page.page_id)));
  return report;
}

}  // namespace rexpath
