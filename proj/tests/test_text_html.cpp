#include <gtest/gtest.h>

#include "rexpath/html.hpp"
#include "rexpath/text.hpp"

using namespace rexpath;

TEST(NormalizeText, TrimsAndCollapsesWhitespace) {
  EXPECT_EQ(normalize_text("  Height: \n"), "Height:");
  EXPECT_EQ(normalize_text("a \t\r\n  b"), "a b");
  EXPECT_EQ(normalize_text(""), "");
  EXPECT_EQ(normalize_text(" \n\t "), "");
}

TEST(NormalizeText, UnicodeSpacesAreWhitespace) {
  EXPECT_EQ(normalize_text("6 ft"), "6 ft");
  EXPECT_EQ(normalize_text(" x　y "), "x y");
}

TEST(NormalizeText, ComposesToNfc) {
  // e + combining acute -> precomposed e-acute
  EXPECT_EQ(normalize_text("Caf\x65\xCC\x81"), "Caf\xC3\xA9");
  EXPECT_EQ(normalize_text("Caf\xC3\xA9"), "Caf\xC3\xA9");
}

TEST(TokenizeWords, LowercasesAndSplitsPunctuation) {
  EXPECT_EQ(tokenize_words("Height: 6 ft"), (std::vector<std::string>{"height", ":", "6", "ft"}));
  EXPECT_EQ(tokenize_words("Run-time (min)"), (std::vector<std::string>{"run", "-", "time", "(", "min", ")"}));
  EXPECT_TRUE(tokenize_words("").empty());
  EXPECT_EQ(tokenize_words("\xC3\x89T\xC3\x89"), (std::vector<std::string>{"\xC3\xA9t\xC3\xA9"}));
}

namespace {

const html::Element* child(const html::Element& e, std::size_t k) {
  std::size_t seen = 0;
  for (const auto& c : e.children) {
    if (c.element) {
      if (seen == k) return c.element.get();
      ++seen;
    }
  }
  return nullptr;
}

std::vector<std::string> child_tags(const html::Element& e) {
  std::vector<std::string> out;
  for (const auto& c : e.children) {
    if (c.element) out.push_back(c.element->tag);
  }
  return out;
}

}  // namespace

TEST(HtmlParse, ImpliedRootAndBody) {
  auto doc = html::parse("<p>one<p>two");
  ASSERT_EQ(doc.root->tag, "html");
  EXPECT_EQ(child_tags(*doc.root), (std::vector<std::string>{"p", "p"}));
}

TEST(HtmlParse, ParagraphsCloseEachOther) {
  auto doc = html::parse("<html><body><p>a<p>b<div>c</div></body></html>");
  const auto* body = child(*doc.root, 0);
  ASSERT_NE(body, nullptr);
  EXPECT_EQ(child_tags(*body), (std::vector<std::string>{"p", "p", "div"}));
}

TEST(HtmlParse, ListItemsAndTableCellsCloseImplicitly) {
  auto doc = html::parse("<body><ul><li>a<li>b</ul><table><tr><td>1<td>2<tr><td>3</table></body>");
  const auto* body = child(*doc.root, 0);
  const auto* ul = child(*body, 0);
  EXPECT_EQ(child_tags(*ul), (std::vector<std::string>{"li", "li"}));
  const auto* table = child(*body, 1);
  EXPECT_EQ(child_tags(*table), (std::vector<std::string>{"tr", "tr"}));
  EXPECT_EQ(child_tags(*child(*table, 0)), (std::vector<std::string>{"td", "td"}));
}

TEST(HtmlParse, NestedListItemsStayNested) {
  auto doc = html::parse("<body><ul><li>a<ul><li>b</li></ul></li></ul></body>");
  const auto* outer_li = child(*child(*child(*doc.root, 0), 0), 0);
  ASSERT_NE(outer_li, nullptr);
  EXPECT_EQ(child_tags(*outer_li), (std::vector<std::string>{"ul"}));
}

TEST(HtmlParse, VoidElementsHaveNoChildren) {
  auto doc = html::parse("<body>a<br>b<img src=x>c</body>");
  const auto* body = child(*doc.root, 0);
  EXPECT_EQ(child_tags(*body), (std::vector<std::string>{"br", "img"}));
  EXPECT_TRUE(child(*body, 0)->children.empty());
}

TEST(HtmlParse, RawTextIsNotMarkup) {
  auto doc = html::parse("<body><script>if (a<b) { x = '<p>'; }</script><p>ok</p></body>");
  const auto* body = child(*doc.root, 0);
  EXPECT_EQ(child_tags(*body), (std::vector<std::string>{"script", "p"}));
}

TEST(HtmlParse, CommentsAndDoctypeIgnored) {
  auto doc = html::parse("<!DOCTYPE html><!-- <p>hidden</p> --><body><p>x</p></body>");
  const auto* body = child(*doc.root, 0);
  EXPECT_EQ(child_tags(*body), (std::vector<std::string>{"p"}));
}

TEST(HtmlParse, EntitiesDecoded) {
  EXPECT_EQ(html::detail::decode_entities("a &amp; b &lt;c&gt; &#65;&#x42; &nbsp;&copy;"), "a & b <c> AB \xC2\xA0\xC2\xA9");
  EXPECT_EQ(html::detail::decode_entities("&unknown; &"), "&unknown; &");
}

TEST(HtmlParse, TagsLowercasedAttributesIgnored) {
  auto doc = html::parse("<BODY><DIV Class=\"x\" data-a='>'>t</DIV></BODY>");
  EXPECT_EQ(child_tags(*child(*doc.root, 0)), (std::vector<std::string>{"div"}));
}

TEST(HtmlParse, MalformedInputsRejected) {
  EXPECT_THROW(html::parse(std::string("<p>a\0b</p>", 10)), Error);
  EXPECT_THROW(html::parse("<body><div class=\"x"), Error);
  EXPECT_THROW(html::parse("just text, no markup"), Error);
  try {
    html::parse("<div");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMalformedMarkup);
  }
}

TEST(HtmlParse, StrayEndTagsTolerated) {
  auto doc = html::parse("<body></span><p>x</p></div></body>");
  EXPECT_EQ(child_tags(*child(*doc.root, 0)), (std::vector<std::string>{"p"}));
}
