#pragma once

// Template-driven synthetic corpora. Every website renders its pages from one
// row template; a key and its value always sit in the same row element, so
// relatedness is a deterministic function of the relative path between them.
// Keys repeat on every page of a website and end with ':'; values are unique
// per page.

#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/corpus.hpp"
#include "rexpath/dom.hpp"

namespace rexpath {

struct SynthTemplate {
  std::string name;
  std::vector<std::string> wrapper;    // under <body>
  std::vector<std::string> container;  // under the wrapper, holds the rows
  std::vector<std::string> row;        // repeated once per key-value row
  std::vector<std::string> key;        // under the row
  std::vector<std::string> value;      // under the row, after the key
  std::vector<std::string> extra;      // optional distractor under the row
};

struct SynthVertical {
  std::string name;
  int websites = 3;
  int pages_per_website = 50;
  std::vector<SynthTemplate> templates;
};

struct SynthConfig {
  std::vector<SynthVertical> verticals;
  int rows_per_page = 5;
  int key_pool = 16;        // candidate keys per website
  int value_words = 40;     // distinct value words per website
  int nav_links = 3;
  int wrapper_jitter = 1;   // up to this many extra <div> wrappers per website
  int page_jitter = 2;      // up to this many further <div> wrappers per page
};

inline nlohmann::json template_to_json(const SynthTemplate& t) {
  return {{"name", t.name}, {"wrapper", t.wrapper}, {"container", t.container}, {"row", t.row},
          {"key", t.key},   {"value", t.value},     {"extra", t.extra}};
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
  nlohmann::json verticals = nlohmann::json::array();
  for (const auto& v : c.verticals) {
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : v.templates) ts.push_back(template_to_json(t));
    verticals.push_back({{"name", v.name},
                         {"websites", v.websites},
                         {"pages_per_website", v.pages_per_website},
                         {"templates", ts}});
  }
  return {{"verticals", verticals},         {"rows_per_page", c.rows_per_page},
          {"key_pool", c.key_pool},         {"value_words", c.value_words},
          {"nav_links", c.nav_links},       {"wrapper_jitter", c.wrapper_jitter},
          {"page_jitter", c.page_jitter}};
}

inline void validate_synth_config(const SynthConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidTemplate, msg); };
  if (c.verticals.empty()) fail("no verticals");
  if (c.rows_per_page < 1) fail("rows_per_page must be >= 1");
  if (c.key_pool < c.rows_per_page) fail("key_pool must be >= rows_per_page");
  if (c.value_words < 1) fail("value_words must be >= 1");
  if (c.wrapper_jitter < 0 || c.page_jitter < 0) fail("jitter must be >= 0");
  std::set<std::string> names;
  const auto& tags = TagVocab::standard();
  auto check_path = [&](const std::vector<std::string>& path, const std::string& what, bool allow_empty) {
    if (path.empty() && !allow_empty) fail(what + " path is empty");
    for (const auto& t : path) {
      if (tags.id(t) == TagVocab::kUnk) fail(what + " uses unknown tag '" + t + "'");
      if (t == "script" || t == "style" || t == "noscript" || t == "template" || t == "html" ||
          t == "body" || t == "head" || t == "br" || t == "img" || t == "hr" || t == "input") {
        fail(what + " uses tag '" + t + "' which cannot hold text rows");
      }
    }
  };
  for (const auto& v : c.verticals) {
    if (v.name.empty() || !names.insert(v.name).second) fail("vertical names must be unique and non-empty");
    if (v.websites < 1 || v.pages_per_website < 1) fail("vertical " + v.name + " needs websites and pages");
    if (v.templates.empty()) fail("vertical " + v.name + " has no templates");
    for (const auto& t : v.templates) {
      check_path(t.wrapper, t.name + ".wrapper", true);
      check_path(t.container, t.name + ".container", true);
      check_path(t.row, t.name + ".row", false);
      check_path(t.key, t.name + ".key", false);
      check_path(t.value, t.name + ".value", false);
      check_path(t.extra, t.name + ".extra", true);
    }
  }
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto strings = [](const nlohmann::json& obj, const char* key) {
    std::vector<std::string> out;
    if (obj.contains(key)) out = obj.at(key).get<std::vector<std::string>>();
    return out;
  };
  try {
    c.rows_per_page = j.value("rows_per_page", c.rows_per_page);
    c.key_pool = j.value("key_pool", c.key_pool);
    c.value_words = j.value("value_words", c.value_words);
    c.nav_links = j.value("nav_links", c.nav_links);
    c.wrapper_jitter = j.value("wrapper_jitter", c.wrapper_jitter);
    c.page_jitter = j.value("page_jitter", c.page_jitter);
    for (const auto& vj : j.at("verticals")) {
      SynthVertical v;
      v.name = vj.at("name").get<std::string>();
      v.websites = vj.value("websites", v.websites);
      v.pages_per_website = vj.value("pages_per_website", v.pages_per_website);
      for (const auto& tj : vj.at("templates")) {
        SynthTemplate t;
        t.name = tj.value("name", std::string("template"));
        t.wrapper = strings(tj, "wrapper");
        t.container = strings(tj, "container");
        t.row = strings(tj, "row");
        t.key = strings(tj, "key");
        t.value = strings(tj, "value");
        t.extra = strings(tj, "extra");
        v.templates.push_back(std::move(t));
      }
      c.verticals.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidTemplate, e.what());
  }
  validate_synth_config(c);
  return c;
}

// Three verticals; the third ("campus") nests its rows deeper than any
// training website, so absolute depths do not transfer but row-local
// relative paths do.
inline SynthConfig default_synth_config(int pages_per_website = 50, int websites = 3) {
  SynthConfig c;
  c.verticals = {
      {"film", websites, pages_per_website,
       {{"film-table", {"div"}, {"table"}, {"tr"}, {"th"}, {"td"}, {"td", "a"}},
        {"film-list", {"div", "div"}, {"ul"}, {"li"}, {"span", "b"}, {"span"}, {}}}},
      {"sport", websites, pages_per_website,
       {{"sport-rows", {"section"}, {"div"}, {"div"}, {"b"}, {"span"}, {"a"}},
        {"sport-table", {"div"}, {"table"}, {"tr"}, {"td", "b"}, {"td"}, {}}}},
      {"campus", websites, pages_per_website,
       {{"campus-table", {"main", "div", "div"}, {"table"}, {"tr"}, {"th"}, {"td"}, {"td", "a"}},
        {"campus-rows", {"article", "div"}, {"div"}, {"div"}, {"b"}, {"span"}, {"a"}}}},
  };
  return c;
}

namespace detail {

class WordForge {
 public:
  explicit WordForge(Rng& rng) : rng_(rng) {}

  // Pronounceable pseudo-word, 2-3 syllables, globally unique.
  std::string fresh(std::set<std::string>& used) {
    static constexpr const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                             "s", "t", "v", "z", "br", "tr", "st", "kl", "dr", "sh"};
    static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
    static constexpr const char* kCoda[] = {"", "", "n", "r", "s", "l", "m", "x"};
    for (;;) {
      std::string w;
      const int syllables = 2 + static_cast<int>(uniform_index(rng_, 2));
      for (int s = 0; s < syllables; ++s) {
        w += kOnset[uniform_index(rng_, std::size(kOnset))];
        w += kVowel[uniform_index(rng_, std::size(kVowel))];
      }
      w += kCoda[uniform_index(rng_, std::size(kCoda))];
      if (used.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
};

inline std::string capitalized(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

inline void open_path(std::string& html, const std::vector<std::string>& path) {
  for (const auto& t : path) html += "<" + t + ">";
}

inline void close_path(std::string& html, const std::vector<std::string>& path) {
  for (auto it = path.rbegin(); it != path.rend(); ++it) html += "</" + *it + ">";
}

inline void wrap_text(std::string& html, const std::vector<std::string>& path, const std::string& text) {
  open_path(html, path);
  html += text;
  close_path(html, path);
}

}  // namespace detail

// Deterministic in (config, seed). When `html_out` is given it receives
// (page id, html) for every page, in corpus order.
inline Corpus generate_synthetic(const SynthConfig& config, std::uint64_t seed,
                                 std::vector<std::pair<std::string, std::string>>* html_out = nullptr) {
  validate_synth_config(config);
  Corpus corpus;
  corpus.provenance = {{"source", "synthetic"}, {"seed", seed}, {"config", synth_config_to_json(config)}};

  std::set<std::string> used_words;
  static const std::vector<std::string> kNav = {"Home", "About", "Contact", "Search", "Help", "News"};

  for (const auto& vertical : config.verticals) {
    for (int w = 0; w < vertical.websites; ++w) {
      const std::string website_id = vertical.name + "-site" + std::to_string(w);
      Rng wrng(mix_seed(seed, fnv1a(website_id)));
      const SynthTemplate& tpl = vertical.templates[static_cast<std::size_t>(w) % vertical.templates.size()];

      // Content words never repeat across websites.
      detail::WordForge forge(wrng);
      std::vector<std::string> keys, value_words, entity_words;
      for (int k = 0; k < config.key_pool; ++k) {
        std::string key = detail::capitalized(forge.fresh(used_words));
        if (uniform_index(wrng, 3) == 0) key += " " + forge.fresh(used_words);
        keys.push_back(key + ":");
      }
      for (int k = 0; k < config.value_words; ++k) value_words.push_back(forge.fresh(used_words));
      for (int k = 0; k < 12; ++k) entity_words.push_back(detail::capitalized(forge.fresh(used_words)));

      std::vector<std::string> wrapper = tpl.wrapper;
      const int jitter = config.wrapper_jitter > 0
                             ? static_cast<int>(uniform_index(wrng, static_cast<std::uint64_t>(config.wrapper_jitter) + 1))
                             : 0;
      for (int j = 0; j < jitter; ++j) wrapper.insert(wrapper.begin(), "div");

      std::vector<std::string> site_keys = keys;
      shuffle_in_place(site_keys, wrng);
      site_keys.resize(static_cast<std::size_t>(config.rows_per_page));
      const std::string extra_text = forge.fresh(used_words);
      const std::string site_name = detail::capitalized(forge.fresh(used_words));
      std::vector<std::string> nav(kNav.begin(), kNav.begin() + std::min<std::size_t>(kNav.size(), static_cast<std::size_t>(config.nav_links)));

      std::set<std::string> site_values;
      for (int p = 0; p < vertical.pages_per_website; ++p) {
        char stem[16];
        std::snprintf(stem, sizeof stem, "%04d", p);
        const std::string page_id = vertical.name + "/" + website_id + "/" + stem;

        const std::string entity = entity_words[uniform_index(wrng, entity_words.size())] + " " +
                                   entity_words[uniform_index(wrng, entity_words.size())] + " " +
                                   std::to_string(p + 1);
        std::vector<std::string> values;
        for (int r = 0; r < config.rows_per_page; ++r) {
          std::string v;
          do {
            v = value_words[uniform_index(wrng, value_words.size())];
            if (uniform_index(wrng, 2) == 0) v += " " + value_words[uniform_index(wrng, value_words.size())];
            v += " " + std::to_string(1 + uniform_index(wrng, 9999));
          } while (!site_values.insert(v).second);
          values.push_back(v);
        }

        std::string html = "<html><head><title>" + entity + "</title></head><body>";
        html += "<div><ul>";
        for (const auto& n : nav) html += "<li><a href=\"#\">" + n + "</a></li>";
        html += "</ul></div><h1>" + entity + "</h1>";
        std::vector<std::string> page_wrapper = wrapper;
        const auto extra_divs = config.page_jitter > 0
                                    ? uniform_index(wrng, static_cast<std::uint64_t>(config.page_jitter) + 1)
                                    : 0;
        page_wrapper.insert(page_wrapper.end(), extra_divs, "div");
        detail::open_path(html, page_wrapper);
        detail::open_path(html, tpl.container);
        for (int r = 0; r < config.rows_per_page; ++r) {
          detail::open_path(html, tpl.row);
          detail::wrap_text(html, tpl.key, site_keys[static_cast<std::size_t>(r)]);
          detail::wrap_text(html, tpl.value, values[static_cast<std::size_t>(r)]);
          if (!tpl.extra.empty()) detail::wrap_text(html, tpl.extra, extra_text);
          detail::close_path(html, tpl.row);
        }
        detail::close_path(html, tpl.container);
        detail::close_path(html, page_wrapper);
        html += "<p>" + site_name + " &copy; all rights reserved</p></body></html>";

        PageRecord page = parse_page(html, page_id, website_id, vertical.name);
        std::unordered_map<std::string, int> by_text;
        for (const auto& node : page.nodes) {
          if (!by_text.emplace(node.text, node.node_id).second) by_text[node.text] = -1;
        }
        auto& gold = corpus.gold[page_id];
        for (int r = 0; r < config.rows_per_page; ++r) {
          const int s = by_text.at(site_keys[static_cast<std::size_t>(r)]);
          const int o = by_text.at(values[static_cast<std::size_t>(r)]);
          if (s < 0 || o < 0) throw Error(ErrorKind::kInvalidTemplate, "ambiguous row text in " + page_id);
          gold.push_back({page_id, s, o, true});
        }
        corpus.pages.push_back(std::move(page));
        if (html_out) html_out->emplace_back(page_id, std::move(html));
      }
    }
  }
  return corpus;
}

}  // namespace rexpath
