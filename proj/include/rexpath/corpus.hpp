#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "rexpath/common.hpp"
#include "rexpath/dom.hpp"

namespace rexpath {

struct PairLabel {
  std::string page_id;
  int subject = 0;
  int object = 0;
  bool positive = true;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

// A node as referenced by an annotation file.
struct NodeRef {
  std::string xpath;
  std::string text;
};

struct AnnotationRecord {
  std::string page_id;
  NodeRef subject;
  NodeRef object;
};

struct Corpus {
  std::vector<PageRecord> pages;
  // Positive pairs keyed by page id, in annotation order.
  std::map<std::string, std::vector<PairLabel>> gold;
  nlohmann::json provenance = nlohmann::json::object();

  const std::vector<PairLabel>& gold_for(const std::string& page_id) const {
    static const std::vector<PairLabel> kEmpty;
    auto it = gold.find(page_id);
    return it == gold.end() ? kEmpty : it->second;
  }

  std::size_t total_gold() const {
    std::size_t n = 0;
    for (const auto& [id, pairs] : gold) n += pairs.size();
    return n;
  }

  std::vector<std::string> verticals() const {
    std::set<std::string> s;
    for (const auto& p : pages) s.insert(p.vertical);
    return {s.begin(), s.end()};
  }

  // website id -> pages, in corpus order.
  std::map<std::string, std::vector<const PageRecord*>> pages_by_website() const {
    std::map<std::string, std::vector<const PageRecord*>> out;
    for (const auto& p : pages) out[p.website_id].push_back(&p);
    return out;
  }

  std::set<std::string> websites() const {
    std::set<std::string> s;
    for (const auto& p : pages) s.insert(p.website_id);
    return s;
  }

  std::vector<const PageRecord*> page_ptrs() const {
    std::vector<const PageRecord*> out;
    out.reserve(pages.size());
    for (const auto& p : pages) out.push_back(&p);
    return out;
  }
};

struct VerticalStats {
  std::string vertical;
  int websites = 0;
  int pages = 0;
  double mean_pairs_per_page = 0.0;
};

inline std::vector<VerticalStats> corpus_stats(const Corpus& corpus) {
  std::map<std::string, std::pair<std::set<std::string>, std::pair<int, std::size_t>>> acc;
  for (const auto& p : corpus.pages) {
    auto& a = acc[p.vertical];
    a.first.insert(p.website_id);
    a.second.first += 1;
    a.second.second += corpus.gold_for(p.page_id).size();
  }
  std::vector<VerticalStats> out;
  for (const auto& [v, a] : acc) {
    VerticalStats s;
    s.vertical = v;
    s.websites = static_cast<int>(a.first.size());
    s.pages = a.second.first;
    s.mean_pairs_per_page = s.pages ? static_cast<double>(a.second.second) / s.pages : 0.0;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Annotation matching

struct MatchReport {
  std::size_t total = 0;
  std::size_t by_xpath = 0;
  std::size_t by_fallback = 0;
  std::size_t unmatched = 0;
  std::size_t duplicates = 0;
  std::map<std::string, std::size_t> unmatched_by_page;

  double mismatch_rate() const { return total ? static_cast<double>(unmatched) / total : 0.0; }
};

namespace detail {

// Exact xpath first, then (normalized text, leaf tag). Returns -1 if neither
// matches. `via_fallback` reports which rule fired.
inline int match_node(const PageRecord& page,
                      const std::unordered_map<std::string, int>& by_xpath,
                      const NodeRef& ref, bool& via_fallback) {
  via_fallback = false;
  XPath parsed;
  try {
    parsed = xpath_from_string(ref.xpath);
  } catch (const Error&) {
  }
  const std::string canonical = xpath_to_string(parsed);
  const std::string text = normalize_text(ref.text);
  if (auto it = by_xpath.find(canonical); it != by_xpath.end()) {
    if (text.empty() || page.nodes[static_cast<std::size_t>(it->second)].text == text) {
      return it->second;
    }
  }
  if (text.empty()) return -1;
  const std::string leaf = parsed.empty() ? std::string() : parsed.back().tag;
  for (const auto& node : page.nodes) {
    if (node.text == text && (leaf.empty() || node.xpath.back().tag == leaf)) {
      via_fallback = true;
      return node.node_id;
    }
  }
  return -1;
}

}  // namespace detail

// Resolves annotation records to node ids and attaches them as gold pairs.
// Throws AnnotationMismatchRate when the unmatched fraction exceeds
// `max_mismatch_rate`, naming the worst pages.
inline MatchReport attach_annotations(Corpus& corpus, const std::vector<AnnotationRecord>& records,
                                      double max_mismatch_rate = 0.2) {
  std::unordered_map<std::string, std::size_t> page_index;
  for (std::size_t i = 0; i < corpus.pages.size(); ++i) page_index.emplace(corpus.pages[i].page_id, i);
  std::unordered_map<std::string, std::unordered_map<std::string, int>> xpath_maps;

  MatchReport report;
  std::set<std::tuple<std::string, int, int>> seen;
  for (const auto& rec : records) {
    ++report.total;
    auto pit = page_index.find(rec.page_id);
    if (pit == page_index.end()) {
      ++report.unmatched;
      ++report.unmatched_by_page[rec.page_id];
      continue;
    }
    const PageRecord& page = corpus.pages[pit->second];
    auto& by_xpath = xpath_maps[page.page_id];
    if (by_xpath.empty()) {
      for (const auto& n : page.nodes) by_xpath.emplace(xpath_to_string(n.xpath), n.node_id);
    }
    bool fb_s = false, fb_o = false;
    const int s = detail::match_node(page, by_xpath, rec.subject, fb_s);
    const int o = detail::match_node(page, by_xpath, rec.object, fb_o);
    if (s < 0 || o < 0 || s == o) {
      ++report.unmatched;
      ++report.unmatched_by_page[rec.page_id];
      continue;
    }
    if (!seen.emplace(page.page_id, s, o).second) {
      ++report.duplicates;
      continue;
    }
    if (fb_s || fb_o) ++report.by_fallback;
    else ++report.by_xpath;
    corpus.gold[page.page_id].push_back({page.page_id, s, o, true});
  }

  if (report.mismatch_rate() > max_mismatch_rate) {
    std::vector<std::pair<std::size_t, std::string>> worst;
    for (const auto& [page, n] : report.unmatched_by_page) worst.emplace_back(n, page);
    std::sort(worst.begin(), worst.end(), std::greater<>());
    std::ostringstream msg;
    msg << report.unmatched << "/" << report.total << " annotations unmatched ("
        << report.mismatch_rate() * 100.0 << "% > " << max_mismatch_rate * 100.0
        << "%); worst pages:";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, worst.size()); ++i) {
      msg << ' ' << worst[i].second << '(' << worst[i].first << ')';
    }
    throw Error(ErrorKind::kAnnotationMismatch, msg.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Line-delimited I/O

inline nlohmann::json annotation_to_json(const AnnotationRecord& r) {
  return {{"page_id", r.page_id},
          {"subject", {{"xpath", r.subject.xpath}, {"text", r.subject.text}}},
          {"object", {{"xpath", r.object.xpath}, {"text", r.object.text}}}};
}

inline AnnotationRecord annotation_from_json(const nlohmann::json& j) {
  AnnotationRecord r;
  r.page_id = j.at("page_id").get<std::string>();
  const auto& s = j.at("subject");
  const auto& o = j.at("object");
  r.subject = {s.value("xpath", std::string()), s.value("text", std::string())};
  r.object = {o.value("xpath", std::string()), o.value("text", std::string())};
  return r;
}

inline std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::vector<AnnotationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(annotation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kIo, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// Gold pairs rendered back to (xpath, text) references.
inline std::vector<AnnotationRecord> corpus_annotations(const Corpus& corpus) {
  std::vector<AnnotationRecord> out;
  for (const auto& page : corpus.pages) {
    for (const auto& pair : corpus.gold_for(page.page_id)) {
      const auto& s = page.nodes.at(static_cast<std::size_t>(pair.subject));
      const auto& o = page.nodes.at(static_cast<std::size_t>(pair.object));
      out.push_back({page.page_id, {xpath_to_string(s.xpath), s.text}, {xpath_to_string(o.xpath), o.text}});
    }
  }
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "pages.jsonl", std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + (dir / "pages.jsonl").string());
    for (const auto& p : corpus.pages) out << page_to_json(p).dump() << '\n';
  }
  {
    std::ofstream out(dir / "pairs.jsonl", std::ios::binary);
    for (const auto& a : corpus_annotations(corpus)) out << annotation_to_json(a).dump() << '\n';
  }
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    out << corpus.provenance.dump(2) << '\n';
  }
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::ifstream in(dir / "pages.jsonl", std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + (dir / "pages.jsonl").string());
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) corpus.pages.push_back(page_from_json(nlohmann::json::parse(line)));
  }
  if (std::filesystem::exists(dir / "pairs.jsonl")) {
    attach_annotations(corpus, read_annotations((dir / "pairs.jsonl").string()), 0.0);
  }
  if (std::ifstream meta(dir / "meta.json"); meta) {
    corpus.provenance = nlohmann::json::parse(meta, nullptr, false);
    if (corpus.provenance.is_discarded()) corpus.provenance = nlohmann::json::object();
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestReport {
  std::size_t files = 0;
  std::size_t malformed = 0;
  std::size_t empty = 0;
  MatchReport matching;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Page id convention: "<vertical>/<website>/<file stem>".
inline Corpus ingest_pages(const std::filesystem::path& pages_dir, IngestReport* report = nullptr,
                           int depth_cap = kDefaultDepthCap) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(pages_dir)) throw Error(ErrorKind::kIo, "not a directory: " + pages_dir.string());
  struct Job {
    fs::path path;
    std::string vertical, website, page_id;
  };
  std::vector<Job> jobs;
  std::vector<fs::path> verticals, websites, files;
  for (const auto& v : fs::directory_iterator(pages_dir)) {
    if (v.is_directory()) verticals.push_back(v.path());
  }
  std::sort(verticals.begin(), verticals.end());
  for (const auto& v : verticals) {
    websites.clear();
    for (const auto& w : fs::directory_iterator(v)) {
      if (w.is_directory()) websites.push_back(w.path());
    }
    std::sort(websites.begin(), websites.end());
    for (const auto& w : websites) {
      files.clear();
      for (const auto& f : fs::directory_iterator(w)) {
        const auto ext = f.path().extension().string();
        if (f.is_regular_file() && (ext == ".htm" || ext == ".html")) files.push_back(f.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const std::string vn = v.filename().string();
        const std::string wn = w.filename().string();
        jobs.push_back({f, vn, wn, vn + "/" + wn + "/" + f.stem().string()});
      }
    }
  }

  std::vector<std::optional<PageRecord>> parsed(jobs.size());
  std::vector<int> status(jobs.size(), 0);  // 1 malformed, 2 empty
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    try {
      parsed[i] = parse_page(read_file(job.path), job.page_id, job.website, job.vertical, depth_cap);
    } catch (const Error& e) {
      status[i] = e.kind() == ErrorKind::kEmptyPage ? 2 : 1;
      if (e.kind() == ErrorKind::kMalformedMarkup) log_warn("skipping " + job.path.string() + ": " + e.what());
    }
  });

  Corpus corpus;
  IngestReport local;
  local.files = jobs.size();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (parsed[i]) corpus.pages.push_back(std::move(*parsed[i]));
    else if (status[i] == 2) ++local.empty;
    else ++local.malformed;
  }
  corpus.provenance = {{"source", "html"}, {"pages_dir", pages_dir.string()}, {"depth_cap", depth_cap}};
  if (report) *report = local;
  return corpus;
}

inline Corpus ingest_swde(const std::filesystem::path& pages_dir, const std::filesystem::path& annotations_path,
                          double max_mismatch_rate = 0.2, IngestReport* report = nullptr,
                          int depth_cap = kDefaultDepthCap) {
  IngestReport local;
  Corpus corpus = ingest_pages(pages_dir, &local, depth_cap);
  local.matching = attach_annotations(corpus, read_annotations(annotations_path.string()), max_mismatch_rate);
  corpus.provenance["annotations"] = annotations_path.string();
  if (report) *report = local;
  return corpus;
}

// ---------------------------------------------------------------------------
// Zero-shot split

inline std::pair<Corpus, Corpus> split_zero_shot(const Corpus& corpus, const std::string& test_vertical) {
  const auto verticals = corpus.verticals();
  if (std::find(verticals.begin(), verticals.end(), test_vertical) == verticals.end()) {
    throw Error(ErrorKind::kUnknownVertical, "no vertical named '" + test_vertical + "'");
  }
  if (verticals.size() < 2) {
    throw Error(ErrorKind::kUnknownVertical, "corpus has a single vertical; nothing to train on");
  }
  Corpus train, test;
  for (const auto& p : corpus.pages) {
    Corpus& dst = (p.vertical == test_vertical) ? test : train;
    dst.pages.push_back(p);
    if (auto it = corpus.gold.find(p.page_id); it != corpus.gold.end()) dst.gold[p.page_id] = it->second;
  }
  train.provenance = corpus.provenance;
  test.provenance = corpus.provenance;
  train.provenance["split"] = {{"role", "train"}, {"test_vertical", test_vertical}};
  test.provenance["split"] = {{"role", "test"}, {"test_vertical", test_vertical}};
  return {std::move(train), std::move(test)};
}

}  // namespace rexpath
