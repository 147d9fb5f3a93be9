#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace rexpath;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config(int pages = 6, int websites = 2) { return default_synth_config(pages, websites); }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST(Synthetic, SameSeedSameCorpus) {
  const auto a = generate_synthetic(small_config(), 7);
  const auto b = generate_synthetic(small_config(), 7);
  EXPECT_EQ(a.pages, b.pages);
  EXPECT_EQ(a.gold, b.gold);
  const auto c = generate_synthetic(small_config(), 8);
  EXPECT_NE(a.pages, c.pages);
}

TEST(Synthetic, ExactlyRowsPerPageGoldPairs) {
  auto cfg = small_config();
  const auto corpus = generate_synthetic(cfg, 7);
  ASSERT_EQ(corpus.pages.size(), 3u * 2u * 6u);
  for (const auto& page : corpus.pages) {
    const auto& gold = corpus.gold_for(page.page_id);
    ASSERT_EQ(gold.size(), 5u) << page.page_id;
    for (const auto& g : gold) {
      EXPECT_EQ(page.nodes[g.subject].text.back(), ':');
      EXPECT_NE(page.nodes[g.object].text.back(), ':');
    }
  }
}

TEST(Synthetic, KeysAppearOnEveryPageValuesOnOne) {
  const auto corpus = generate_synthetic(default_synth_config(50, 3), 7);
  for (const auto& [site, pages] : corpus.pages_by_website()) {
    const auto idx = build_index(pages);
    ASSERT_EQ(idx.num_pages, 50);
    for (const PageRecord* page : pages) {
      for (const auto& g : corpus.gold_for(page->page_id)) {
        EXPECT_EQ(idx.pop(page->nodes[g.subject].text), 50);
        EXPECT_EQ(idx.pop(page->nodes[g.object].text), 1);
      }
    }
  }
}

TEST(Synthetic, InvalidTemplateRejected) {
  auto cfg = small_config();
  cfg.verticals[0].templates.clear();
  EXPECT_THROW(generate_synthetic(cfg, 1), Error);
  cfg = small_config();
  cfg.rows_per_page = cfg.key_pool + 1;
  try {
    generate_synthetic(cfg, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidTemplate);
  }
}

TEST(Synthetic, ConfigJsonRoundTrip) {
  const auto cfg = small_config(9, 4);
  const auto back = synth_config_from_json(synth_config_to_json(cfg));
  EXPECT_EQ(synth_config_to_json(back), synth_config_to_json(cfg));
}

TEST(SplitZeroShot, DisjointVerticalsAndPages) {
  const auto corpus = generate_synthetic(small_config(), 3);
  const auto [train, test] = split_zero_shot(corpus, "campus");
  EXPECT_EQ(train.verticals(), (std::vector<std::string>{"film", "sport"}));
  EXPECT_EQ(test.verticals(), (std::vector<std::string>{"campus"}));
  EXPECT_EQ(train.pages.size() + test.pages.size(), corpus.pages.size());
  for (const auto& site : test.websites()) EXPECT_EQ(train.websites().count(site), 0u);
  EXPECT_EQ(train.total_gold() + test.total_gold(), corpus.total_gold());

  const auto [train2, test2] = split_zero_shot(corpus, "film");
  EXPECT_EQ(train2.verticals(), (std::vector<std::string>{"campus", "sport"}));
}

TEST(SplitZeroShot, Errors) {
  const auto corpus = generate_synthetic(small_config(), 3);
  try {
    split_zero_shot(corpus, "University");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnknownVertical);
  }
  auto single = split_zero_shot(corpus, "film").second;
  EXPECT_THROW(split_zero_shot(single, "film"), Error);
}

TEST(Annotations, XPathThenFallbackThenUnmatched) {
  Corpus corpus;
  corpus.pages.push_back(parse_page("<body><div><b>Born:</b><span>1950</span></div><div><b>Died:</b><span>2001</span></div></body>",
                                    "v/w/1", "w", "v"));
  const std::vector<AnnotationRecord> records = {
      {"v/w/1", {"html[1]/body[1]/div[1]/b[1]", "Born:"}, {"html[1]/body[1]/div[1]/span[1]", "1950"}},
      // Wrong xpath, right text and leaf tag.
      {"v/w/1", {"html[1]/body[1]/section[1]/b[1]", "Died:"}, {"html[1]/span[9]", "2001"}},
      {"v/w/1", {"html[1]/body[1]/div[1]/b[1]", "Born:"}, {"html[1]/body[1]/div[1]/span[1]", "1950"}},
      {"v/w/1", {"", "Nowhere"}, {"", "1950"}},
  };
  const auto report = attach_annotations(corpus, records, 0.5);
  EXPECT_EQ(report.total, 4u);
  EXPECT_EQ(report.by_xpath, 1u);
  EXPECT_EQ(report.by_fallback, 1u);
  EXPECT_EQ(report.duplicates, 1u);
  EXPECT_EQ(report.unmatched, 1u);
  ASSERT_EQ(corpus.gold_for("v/w/1").size(), 2u);
  EXPECT_EQ(corpus.gold_for("v/w/1")[0], (PairLabel{"v/w/1", 0, 1, true}));
  EXPECT_EQ(corpus.gold_for("v/w/1")[1], (PairLabel{"v/w/1", 2, 3, true}));
}

TEST(Annotations, MismatchRateAboveThresholdIsAnError) {
  Corpus corpus;
  corpus.pages.push_back(parse_page("<body><p>a</p><p>b</p></body>", "v/w/1", "w", "v"));
  const std::vector<AnnotationRecord> records = {
      {"v/w/1", {"html[1]/body[1]/p[1]", "a"}, {"html[1]/body[1]/p[2]", "b"}},
      {"v/w/1", {"", "zzz"}, {"", "b"}},
      {"v/w/2", {"", "a"}, {"", "b"}},
  };
  try {
    attach_annotations(corpus, records, 0.2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kAnnotationMismatch);
    EXPECT_NE(std::string(e.what()).find("v/w/1"), std::string::npos);
  }
}

TEST(CorpusIo, SaveLoadRoundTrip) {
  const auto corpus = generate_synthetic(small_config(4, 2), 11);
  const auto dir = oracle::temp_dir("corpus_roundtrip");
  save_corpus(corpus, dir);
  const auto back = load_corpus(dir);
  EXPECT_EQ(back.pages, corpus.pages);
  EXPECT_EQ(back.gold, corpus.gold);
  EXPECT_EQ(back.provenance, corpus.provenance);
}

// Rendered HTML written to disk and ingested again reproduces the corpus.
TEST(Ingest, HtmlTreePreservesGoldCounts) {
  std::vector<std::pair<std::string, std::string>> html;
  const auto corpus = generate_synthetic(small_config(5, 2), 21, &html);
  const auto dir = oracle::temp_dir("ingest_tree");
  for (const auto& [id, text] : html) write_text(dir / "pages" / (id + ".htm"), text);
  write_text(dir / "pages" / "film" / "broken" / "0000.htm", "no markup here");
  write_text(dir / "pages" / "film" / "blank" / "0000.htm", "<html><body><script>x</script></body></html>");
  {
    std::ofstream out(dir / "pairs.jsonl");
    for (const auto& a : corpus_annotations(corpus)) out << annotation_to_json(a).dump() << '\n';
  }
  IngestReport report;
  const auto back = ingest_swde(dir / "pages", dir / "pairs.jsonl", 0.2, &report);
  EXPECT_EQ(report.files, corpus.pages.size() + 2);
  EXPECT_EQ(report.malformed, 1u);
  EXPECT_EQ(report.empty, 1u);
  EXPECT_EQ(report.matching.unmatched, 0u);
  EXPECT_EQ(report.matching.by_xpath, corpus.total_gold());
  // Ingestion walks directories in sorted order.
  auto expected = corpus.pages;
  std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) { return a.page_id < b.page_id; });
  EXPECT_EQ(back.pages, expected);
  EXPECT_EQ(back.gold, corpus.gold);

  const auto stats = corpus_stats(back);
  ASSERT_EQ(stats.size(), 3u);
  for (const auto& s : stats) {
    EXPECT_EQ(s.websites, 2);
    EXPECT_EQ(s.pages, 10);
    EXPECT_DOUBLE_EQ(s.mean_pairs_per_page, 5.0);
  }
}

TEST(Vocab, BuildFiltersAndOrders) {
  PageRecord a, b;
  a.page_id = "a";
  a.website_id = "s1";
  b.page_id = "b";
  b.website_id = "s2";
  a.nodes = {{0, "alpha beta beta", {{"html", 1}}}, {1, "gamma local local", {{"html", 1}, {"p", 1}}}};
  b.nodes = {{0, "alpha beta", {{"html", 1}}}};
  const std::vector<const PageRecord*> pages = {&a, &b};

  const auto v = Vocab::build(pages, 2);
  EXPECT_EQ(v.token(4), "beta");
  EXPECT_EQ(v.token(5), "alpha");
  EXPECT_EQ(v.token(6), "local");
  EXPECT_EQ(v.id("gamma"), Vocab::kUnk);

  const auto cross = Vocab::build(pages, 2, 2);
  EXPECT_EQ(cross.id("local"), Vocab::kUnk);
  EXPECT_NE(cross.id("alpha"), Vocab::kUnk);

  const auto dir = oracle::temp_dir("vocab_io");
  v.save((dir / "vocab.txt").string());
  const auto back = Vocab::load((dir / "vocab.txt").string());
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.hash(), v.hash());
}
