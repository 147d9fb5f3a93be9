#pragma once

// Tolerant HTML tree builder. It follows the parts of the HTML parsing rules
// that affect element nesting (void elements, raw-text elements, implied end
// tags for p/li/dt/dd/tr/td/th/option) and ignores everything else,
// attributes included. No tbody is inserted, matching lxml-style trees.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "rexpath/common.hpp"

namespace rexpath::html {

struct Element {
  std::string tag;
  Element* parent = nullptr;
  // Children in document order. A child is either an element or a text run.
  struct Child {
    std::unique_ptr<Element> element;
    std::string text;
    bool is_text() const { return element == nullptr; }
  };
  std::vector<Child> children;
};

struct Document {
  std::unique_ptr<Element> root;  // always an <html> element
};

namespace detail {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f';
}

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view tag) {
  for (auto s : set) {
    if (s == tag) return true;
  }
  return false;
}

inline constexpr std::array<std::string_view, 16> kVoid = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "keygen", "link", "meta", "param", "source", "track", "wbr", "basefont"};

inline constexpr std::array<std::string_view, 2> kRawText = {"script", "style"};

// Opening one of these closes an open <p>.
inline constexpr std::array<std::string_view, 30> kClosesP = {
    "address", "article", "aside", "blockquote", "center", "details", "dialog",
    "dir", "div", "dl", "fieldset", "figcaption", "figure", "footer", "form",
    "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "main", "menu", "nav",
    "ol", "p", "pre", "section"};

inline constexpr std::array<std::string_view, 4> kClosesP2 = {"table", "ul", "hgroup", "summary"};

// Elements an implied end tag may not cross.
inline constexpr std::array<std::string_view, 9> kScopeBoundary = {
    "html", "body", "table", "td", "th", "caption", "button", "object", "template"};

inline void append_codepoint(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

struct NamedEntity {
  std::string_view name;
  std::uint32_t cp;
};

inline constexpr std::array<NamedEntity, 40> kEntities = {{
    {"amp", '&'},      {"lt", '<'},        {"gt", '>'},        {"quot", '"'},
    {"apos", '\''},    {"nbsp", 0xA0},     {"copy", 0xA9},     {"reg", 0xAE},
    {"trade", 0x2122}, {"mdash", 0x2014},  {"ndash", 0x2013},  {"hellip", 0x2026},
    {"laquo", 0xAB},   {"raquo", 0xBB},    {"middot", 0xB7},   {"bull", 0x2022},
    {"lsquo", 0x2018}, {"rsquo", 0x2019},  {"ldquo", 0x201C},  {"rdquo", 0x201D},
    {"eacute", 0xE9},  {"egrave", 0xE8},   {"aacute", 0xE1},   {"iacute", 0xED},
    {"oacute", 0xF3},  {"uacute", 0xFA},   {"ntilde", 0xF1},   {"uuml", 0xFC},
    {"ouml", 0xF6},    {"auml", 0xE4},     {"ccedil", 0xE7},   {"deg", 0xB0},
    {"frac12", 0xBD},  {"pound", 0xA3},    {"euro", 0x20AC},   {"yen", 0xA5},
    {"cent", 0xA2},    {"sect", 0xA7},     {"times", 0xD7},    {"ensp", 0x2002},
}};

// Decodes character references; unknown references are kept verbatim.
inline std::string decode_entities(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != '&') {
      out.push_back(in[i]);
      continue;
    }
    std::size_t semi = in.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back('&');
      continue;
    }
    std::string_view ref = in.substr(i + 1, semi - i - 1);
    bool done = false;
    if (!ref.empty() && ref[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ref.size() > 1 && (ref[1] == 'x' || ref[1] == 'X');
      std::size_t start = hex ? 2 : 1;
      bool ok = ref.size() > start;
      for (std::size_t k = start; k < ref.size() && ok; ++k) {
        char c = ref[k];
        int digit = -1;
        if (c >= '0' && c <= '9') digit = c - '0';
        else if (hex && c >= 'a' && c <= 'f') digit = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') digit = c - 'A' + 10;
        if (digit < 0) ok = false;
        else cp = std::min<std::uint32_t>(cp * (hex ? 16 : 10) + digit, 0x110000);
      }
      if (ok) {
        append_codepoint(out, cp);
        done = true;
      }
    } else {
      for (const auto& e : kEntities) {
        if (e.name == ref) {
          append_codepoint(out, e.cp);
          done = true;
          break;
        }
      }
    }
    if (done) {
      i = semi;
    } else {
      out.push_back('&');
    }
  }
  return out;
}

class TreeBuilder {
 public:
  TreeBuilder() {
    doc_.root = std::make_unique<Element>();
    doc_.root->tag = "html";
    stack_.push_back(doc_.root.get());
  }

  void text(std::string_view raw) {
    if (raw.empty()) return;
    Element* top = stack_.back();
    if (!top->children.empty() && top->children.back().is_text()) {
      top->children.back().text += decode_entities(raw);
    } else {
      Element::Child child;
      child.text = decode_entities(raw);
      top->children.push_back(std::move(child));
    }
  }

  void start_tag(const std::string& tag, bool self_closing) {
    saw_element_ = true;
    if (tag == "html") return;  // merged into the implicit root
    if ((tag == "body" || tag == "head") && has_child(doc_.root.get(), tag)) return;

    apply_implied_end_tags(tag);

    auto el = std::make_unique<Element>();
    el->tag = tag;
    Element* top = stack_.back();
    el->parent = top;
    Element* raw = el.get();
    Element::Child child;
    child.element = std::move(el);
    top->children.push_back(std::move(child));
    if (!self_closing && !contains(kVoid, tag)) stack_.push_back(raw);
  }

  void end_tag(const std::string& tag) {
    if (tag == "html" || tag == "body") return;
    for (std::size_t i = stack_.size(); i-- > 1;) {
      if (stack_[i]->tag == tag) {
        stack_.resize(i);
        return;
      }
    }
  }

  bool saw_element() const { return saw_element_; }
  Document finish() { return std::move(doc_); }

 private:
  static bool has_child(const Element* e, const std::string& tag) {
    for (const auto& c : e->children) {
      if (!c.is_text() && c.element->tag == tag) return true;
    }
    return false;
  }

  // Pops through `target` if it is open above the nearest boundary element.
  template <std::size_t N, std::size_t M>
  void close_if_open(const std::array<std::string_view, N>& targets,
                     const std::array<std::string_view, M>& boundaries) {
    for (std::size_t i = stack_.size(); i-- > 1;) {
      const std::string& t = stack_[i]->tag;
      if (contains(targets, t)) {
        stack_.resize(i);
        return;
      }
      if (contains(boundaries, t) || contains(kScopeBoundary, t)) return;
    }
  }

  void apply_implied_end_tags(const std::string& tag) {
    static constexpr std::array<std::string_view, 1> kP = {"p"};
    static constexpr std::array<std::string_view, 1> kLi = {"li"};
    static constexpr std::array<std::string_view, 2> kListBoundary = {"ul", "ol"};
    static constexpr std::array<std::string_view, 2> kDtDd = {"dt", "dd"};
    static constexpr std::array<std::string_view, 1> kDl = {"dl"};
    static constexpr std::array<std::string_view, 1> kTr = {"tr"};
    static constexpr std::array<std::string_view, 3> kSection = {"tbody", "thead", "tfoot"};
    static constexpr std::array<std::string_view, 2> kCell = {"td", "th"};
    static constexpr std::array<std::string_view, 1> kRow = {"tr"};
    static constexpr std::array<std::string_view, 1> kOption = {"option"};
    static constexpr std::array<std::string_view, 1> kSelect = {"select"};
    static constexpr std::array<std::string_view, 0> kNone = {};

    if (contains(kClosesP, tag) || contains(kClosesP2, tag) || tag == "li" ||
        tag == "dt" || tag == "dd") {
      close_if_open(kP, kNone);
    }
    if (tag == "li") close_if_open(kLi, kListBoundary);
    if (tag == "dt" || tag == "dd") close_if_open(kDtDd, kDl);
    if (tag == "td" || tag == "th") close_if_open(kCell, kRow);
    if (tag == "tr") {
      close_if_open(kCell, kRow);
      close_if_open(kTr, kSection);
    }
    if (tag == "tbody" || tag == "thead" || tag == "tfoot") {
      close_if_open(kCell, kRow);
      close_if_open(kTr, kSection);
      close_if_open(kSection, kNone);
    }
    if (tag == "option") close_if_open(kOption, kSelect);
  }

  Document doc_;
  std::vector<Element*> stack_;
  bool saw_element_ = false;
};

}  // namespace detail

// Builds a DOM tree. Throws MalformedMarkup when the bytes are binary (NUL
// bytes) or contain no element markup at all.
inline Document parse(std::string_view src) {
  if (src.find('\0') != std::string_view::npos) {
    throw Error(ErrorKind::kMalformedMarkup, "binary content (NUL byte)");
  }
  using detail::ascii_lower;
  using detail::is_alpha;
  using detail::is_space;

  detail::TreeBuilder builder;
  std::size_t i = 0;
  std::size_t text_start = 0;
  const std::size_t n = src.size();

  auto flush_text = [&](std::size_t end) {
    if (end > text_start) builder.text(src.substr(text_start, end - text_start));
  };

  while (i < n) {
    if (src[i] != '<' || i + 1 >= n) {
      ++i;
      continue;
    }
    char next = src[i + 1];
    if (src.compare(i, 4, "<!--") == 0) {
      flush_text(i);
      std::size_t end = src.find("-->", i + 4);
      i = (end == std::string_view::npos) ? n : end + 3;
      text_start = i;
    } else if (src.compare(i, 9, "<![CDATA[") == 0) {
      flush_text(i);
      std::size_t end = src.find("]]>", i + 9);
      std::size_t stop = (end == std::string_view::npos) ? n : end;
      builder.text(src.substr(i + 9, stop - i - 9));
      i = (end == std::string_view::npos) ? n : end + 3;
      text_start = i;
    } else if (next == '!' || next == '?') {
      flush_text(i);
      std::size_t end = src.find('>', i + 2);
      i = (end == std::string_view::npos) ? n : end + 1;
      text_start = i;
    } else if (next == '/' || is_alpha(next)) {
      const bool closing = next == '/';
      std::size_t j = i + (closing ? 2 : 1);
      if (closing && (j >= n || !is_alpha(src[j]))) {
        ++i;
        continue;
      }
      flush_text(i);
      std::string tag;
      while (j < n && !is_space(src[j]) && src[j] != '>' && src[j] != '/') {
        tag.push_back(ascii_lower(src[j]));
        ++j;
      }
      // Skip attributes, honoring quotes so '>' inside values is ignored.
      bool self_closing = false;
      char quote = 0;
      while (j < n) {
        char c = src[j];
        if (quote) {
          if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
          quote = c;
        } else if (c == '>') {
          break;
        }
        ++j;
      }
      if (j >= n) {
        throw Error(ErrorKind::kMalformedMarkup, "unterminated tag <" + tag + " at byte " + std::to_string(i));
      }
      self_closing = j > 0 && src[j - 1] == '/' && !closing;
      i = j + 1;
      text_start = i;
      if (closing) {
        builder.end_tag(tag);
        continue;
      }
      builder.start_tag(tag, self_closing);
      if (!self_closing && detail::contains(detail::kRawText, tag)) {
        // Raw text: everything up to the matching close tag is content.
        std::size_t k = i;
        std::size_t close = n;
        while (k < n) {
          std::size_t lt = src.find("</", k);
          if (lt == std::string_view::npos) break;
          bool match = lt + 2 + tag.size() <= n;
          for (std::size_t t = 0; match && t < tag.size(); ++t) {
            if (ascii_lower(src[lt + 2 + t]) != tag[t]) match = false;
          }
          if (match) {
            close = lt;
            break;
          }
          k = lt + 2;
        }
        builder.text(src.substr(i, close - i));
        if (close == n) {
          i = n;
        } else {
          std::size_t gt = src.find('>', close);
          i = (gt == std::string_view::npos) ? n : gt + 1;
        }
        builder.end_tag(tag);
        text_start = i;
      }
    } else {
      ++i;
    }
  }
  flush_text(n);
  if (!builder.saw_element()) {
    throw Error(ErrorKind::kMalformedMarkup, "no element markup found");
  }
  return builder.finish();
}

}  // namespace rexpath::html
