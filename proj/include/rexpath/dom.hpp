#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/html.hpp"
#include "rexpath/text.hpp"

namespace rexpath {

struct XPathStep {
  std::string tag;
  int index = 1;  // 1-based among same-tag siblings

  friend bool operator==(const XPathStep&, const XPathStep&) = default;
};

using XPath = std::vector<XPathStep>;

struct TextNode {
  int node_id = 0;
  std::string text;
  XPath xpath;

  friend bool operator==(const TextNode&, const TextNode&) = default;
};

struct PageRecord {
  std::string page_id;
  std::string website_id;
  std::string vertical;
  std::vector<TextNode> nodes;

  friend bool operator==(const PageRecord&, const PageRecord&) = default;
};

inline constexpr int kDefaultDepthCap = 50;

// "html[1]/body[1]/div[2]"
inline std::string xpath_to_string(const XPath& xpath) {
  std::string out;
  for (std::size_t i = 0; i < xpath.size(); ++i) {
    if (i) out.push_back('/');
    out += xpath[i].tag;
    out.push_back('[');
    out += std::to_string(xpath[i].index);
    out.push_back(']');
  }
  return out;
}

// Accepts the bracketed form; a missing "[i]" means index 1. A leading '/'
// is tolerated.
inline XPath xpath_from_string(std::string_view s) {
  XPath out;
  std::size_t i = 0;
  if (!s.empty() && s[0] == '/') i = 1;
  while (i < s.size()) {
    std::size_t end = s.find('/', i);
    if (end == std::string_view::npos) end = s.size();
    std::string_view step = s.substr(i, end - i);
    XPathStep st;
    std::size_t lb = step.find('[');
    if (lb == std::string_view::npos) {
      st.tag = std::string(step);
    } else {
      st.tag = std::string(step.substr(0, lb));
      std::size_t rb = step.find(']', lb);
      if (rb == std::string_view::npos) {
        throw Error(ErrorKind::kIo, "bad xpath step: " + std::string(step));
      }
      st.index = std::stoi(std::string(step.substr(lb + 1, rb - lb - 1)));
    }
    for (auto& c : st.tag) c = html::detail::ascii_lower(c);
    if (st.tag.empty() || st.index < 1) {
      throw Error(ErrorKind::kIo, "bad xpath step: " + std::string(step));
    }
    out.push_back(std::move(st));
    i = end + 1;
  }
  return out;
}

// Closed tag vocabulary. PAD is id 0, UNK is id 1, standard HTML tags follow.
class TagVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  TagVocab() {
    names_ = {"<pad>", "<unk>"};
    for (auto t : kStandardTags) names_.emplace_back(t);
    for (std::size_t i = 0; i < names_.size(); ++i) ids_.emplace(names_[i], static_cast<int>(i));
  }

  int id(std::string_view tag) const {
    auto it = ids_.find(std::string(tag));
    return it == ids_.end() ? kUnk : it->second;
  }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("tagvocab");
    for (const auto& n : names_) h = fnv1a(n + "\n", h);
    return h;
  }

  static const TagVocab& standard() {
    static const TagVocab v;
    return v;
  }

 private:
  static constexpr std::array<std::string_view, 114> kStandardTags = {
      "a", "abbr", "address", "area", "article", "aside", "audio", "b", "base",
      "bdi", "bdo", "blockquote", "body", "br", "button", "canvas", "caption",
      "center", "cite", "code", "col", "colgroup", "data", "datalist", "dd",
      "del", "details", "dfn", "dialog", "dir", "div", "dl", "dt", "em", "embed",
      "fieldset", "figcaption", "figure", "font", "footer", "form", "frame",
      "frameset", "h1", "h2", "h3", "h4", "h5", "h6", "head", "header", "hgroup",
      "hr", "html", "i", "iframe", "img", "input", "ins", "kbd", "label",
      "legend", "li", "link", "main", "map", "mark", "menu", "meta", "meter",
      "nav", "nobr", "noscript", "object", "ol", "optgroup", "option", "output",
      "p", "param", "picture", "pre", "progress", "q", "s", "samp", "script",
      "section", "select", "small", "source", "span", "strike", "strong",
      "style", "sub", "summary", "sup", "table", "tbody", "td", "template",
      "textarea", "tfoot", "th", "thead", "time", "title", "tr", "tt", "u", "ul",
      "var", "video"};

  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

inline int tag_id(std::string_view tag, const TagVocab& vocab = TagVocab::standard()) {
  return vocab.id(tag);
}

namespace detail {

inline bool excluded_subtree(std::string_view tag) {
  return tag == "script" || tag == "style" || tag == "noscript" || tag == "template";
}

// Pre-order walk. An element's direct text runs are joined into one node that
// precedes the element's descendants.
inline void collect_text_nodes(const html::Element& el, XPath& path, int depth_cap,
                               std::vector<TextNode>& out) {
  std::string own;
  for (const auto& child : el.children) {
    if (child.is_text()) {
      if (!own.empty()) own.push_back(' ');
      own += child.text;
    }
  }
  std::string norm = normalize_text(own);
  if (!norm.empty()) {
    TextNode node;
    node.node_id = static_cast<int>(out.size());
    node.text = std::move(norm);
    const std::size_t keep = std::min<std::size_t>(path.size(), static_cast<std::size_t>(depth_cap));
    node.xpath.assign(path.end() - static_cast<std::ptrdiff_t>(keep), path.end());
    out.push_back(std::move(node));
  }
  std::unordered_map<std::string, int> seen;
  for (const auto& child : el.children) {
    if (child.is_text()) continue;
    const html::Element& c = *child.element;
    int idx = ++seen[c.tag];
    if (excluded_subtree(c.tag)) continue;
    path.push_back({c.tag, idx});
    collect_text_nodes(c, path, depth_cap, out);
    path.pop_back();
  }
}

}  // namespace detail

// Parses raw page bytes into text nodes with absolute XPaths.
// Throws MalformedMarkup or EmptyPage.
inline PageRecord parse_page(std::string_view html_bytes, std::string page_id,
                             std::string website_id, std::string vertical,
                             int depth_cap = kDefaultDepthCap) {
  html::Document doc = html::parse(html_bytes);
  PageRecord page;
  page.page_id = std::move(page_id);
  page.website_id = std::move(website_id);
  page.vertical = std::move(vertical);
  XPath path{{"html", 1}};
  detail::collect_text_nodes(*doc.root, path, depth_cap, page.nodes);
  if (page.nodes.empty()) {
    throw Error(ErrorKind::kEmptyPage, "page " + page.page_id + " has no text nodes");
  }
  return page;
}

inline nlohmann::json page_to_json(const PageRecord& page) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : page.nodes) {
    nodes.push_back({{"node_id", n.node_id}, {"text", n.text}, {"xpath", xpath_to_string(n.xpath)}});
  }
  return {{"page_id", page.page_id},
          {"website_id", page.website_id},
          {"vertical", page.vertical},
          {"nodes", std::move(nodes)}};
}

inline PageRecord page_from_json(const nlohmann::json& j) {
  PageRecord page;
  page.page_id = j.at("page_id").get<std::string>();
  page.website_id = j.at("website_id").get<std::string>();
  page.vertical = j.at("vertical").get<std::string>();
  for (const auto& n : j.at("nodes")) {
    page.nodes.push_back({n.at("node_id").get<int>(), n.at("text").get<std::string>(),
                          xpath_from_string(n.at("xpath").get<std::string>())});
  }
  return page;
}

}  // namespace rexpath
