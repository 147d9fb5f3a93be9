#include <gtest/gtest.h>

#include <algorithm>

#include "oracles.hpp"

using namespace rexpath;

namespace {

PageRecord page(const std::string& id, const std::string& site, std::vector<std::string> texts) {
  PageRecord p;
  p.page_id = id;
  p.website_id = site;
  p.vertical = "v";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    p.nodes.push_back({static_cast<int>(i), texts[i], {{"html", 1}, {"div", static_cast<int>(i) + 1}}});
  }
  return p;
}

}  // namespace

TEST(BuildIndex, CountsPagesNotOccurrences) {
  const std::vector<PageRecord> pages = {
      page("1", "w", {"Height:", "6 ft"}),
      page("2", "w", {"Weight:", "80 kg"}),
      page("3", "w", {"Height:", "Height:", "5 ft"}),
  };
  const auto idx = build_index(pages);
  EXPECT_EQ(idx.website_id, "w");
  EXPECT_EQ(idx.num_pages, 3);
  EXPECT_EQ(idx.pop("Height:"), 2);
  EXPECT_EQ(idx.pop("6 ft"), 1);
  EXPECT_EQ(idx.pop("height:"), 1);
}

TEST(BuildIndex, TextOnEveryPage) {
  std::vector<PageRecord> pages;
  for (int i = 0; i < 100; ++i) pages.push_back(page(std::to_string(i), "w", {"Born:", "v" + std::to_string(i)}));
  const auto idx = build_index(pages);
  EXPECT_EQ(idx.pop("Born:"), 100);
  EXPECT_EQ(idx.pop("v7"), 1);
}

TEST(BuildIndex, MixedWebsitesRejected) {
  const std::vector<PageRecord> pages = {page("1", "a", {"x"}), page("2", "b", {"x"})};
  try {
    build_index(pages);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMixedWebsites);
  }
}

TEST(BuildIndex, OrderIndependentAndIdempotentUnderDuplication) {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<PageRecord> pages;
    const int n = 1 + static_cast<int>(uniform_index(rng, 20));
    for (int i = 0; i < n; ++i) {
      std::vector<std::string> texts;
      const int m = 1 + static_cast<int>(uniform_index(rng, 10));
      for (int k = 0; k < m; ++k) texts.push_back("w" + std::to_string(uniform_index(rng, 15)));
      pages.push_back(page(std::to_string(i), "site", texts));
    }
    const auto base = build_index(pages);
    for (const auto& [text, count] : base.counts) {
      EXPECT_GE(count, 1);
      EXPECT_LE(count, n);
    }
    auto shuffled = pages;
    shuffle_in_place(shuffled, rng);
    EXPECT_EQ(build_index(shuffled).counts, base.counts);

    auto duplicated = pages;
    for (auto& p : duplicated) p.nodes.push_back(p.nodes.front());
    EXPECT_EQ(build_index(duplicated).counts, base.counts);
  }
}

TEST(PopBucket, Examples) {
  EXPECT_EQ(pop_bucket(1, 50, 20), 0);
  EXPECT_EQ(pop_bucket(100, 100, 20), 20);
  EXPECT_EQ(pop_bucket(10, 100, 20), 10);
  EXPECT_EQ(oracle::pop_bucket_exact(10, 100, 20), 10);
  EXPECT_EQ(pop_bucket(1, 1, 20), 0);
  EXPECT_EQ(pop_bucket(2, 32, 5), 1);
}

TEST(PopBucket, MatchesExactIntegerOracle) {
  for (int tau : {1, 5, 20}) {
    for (int n : {2, 3, 10, 32, 100, 1000}) {
      int previous = 0;
      for (int pop = 1; pop <= n; ++pop) {
        const int b = pop_bucket(pop, n, tau);
        ASSERT_EQ(b, oracle::pop_bucket_exact(pop, n, tau)) << "pop=" << pop << " N=" << n << " tau=" << tau;
        ASSERT_GE(b, previous);
        ASSERT_GE(b, 0);
        ASSERT_LE(b, tau);
        previous = b;
      }
      EXPECT_EQ(pop_bucket(n, n, tau), tau);
    }
  }
}

TEST(PopularitySidecar, RoundTrip) {
  const std::vector<PageRecord> pages = {page("1", "site one", {"Height:", "a\tb"}), page("2", "site one", {"Height:", "c"})};
  const auto idx = build_index(pages);
  const auto dir = oracle::temp_dir("popularity_sidecar");
  const auto path = (dir / "pop.tsv").string();
  write_popularity(idx, path);
  const auto back = read_popularity(path);
  EXPECT_EQ(back.website_id, "site one");
  EXPECT_EQ(back.num_pages, 2);
  EXPECT_EQ(back.counts, idx.counts);
}
