#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pemuta/layout.hpp"
#include "support.hpp"

using namespace pemuta;
using namespace pemuta::layout;

namespace {

std::string text_line(int page, double y0, const std::string& text, double x0 = 72) {
  nlohmann::json j = {{"page", page},
                      {"kind", "text-line"},
                      {"bbox", {x0, y0, x0 + 200, y0 + 10}},
                      {"text", text},
                      {"font_size", 10}};
  return j.dump() + "\n";
}

template <class E>
void expect_error(const std::string& raw, const std::string& name) {
  try {
    parse_layout_stream(raw);
    FAIL() << "expected " << name;
  } catch (const E& e) {
    EXPECT_EQ(e.name(), name);
  }
}

}  // namespace

TEST(ParseLayout, SingleRecord) {
  auto s = parse_layout_stream(text_line(1, 100, "hello"));
  ASSERT_EQ(s.elements.size(), 1u);
  EXPECT_EQ(s.elements[0].kind, ElementKind::TextLine);
  EXPECT_EQ(s.elements[0].text, "hello");
  EXPECT_EQ(s.page_count, 1);
}

TEST(ParseLayout, InvertedBoxIsMalformed) {
  expect_error<MalformedRecord>(
      R"({"page":1,"kind":"text-line","bbox":[300,10,100,20],"text":"x"})" "\n", "MalformedRecord");
  expect_error<MalformedRecord>(
      R"({"page":1,"kind":"text-line","bbox":[100,30,300,20],"text":"x"})" "\n", "MalformedRecord");
}

TEST(ParseLayout, RejectsBadRecords) {
  const char* bad[] = {
      "not json",
      R"({"kind":"text-line","bbox":[0,0,1,1],"text":"x"})",
      R"({"page":0,"kind":"text-line","bbox":[0,0,1,1],"text":"x"})",
      R"({"page":1,"kind":"sidebar","bbox":[0,0,1,1]})",
      R"({"page":1,"kind":"figure","bbox":[0,0,1]})",
      R"({"page":1,"kind":"figure","bbox":[0,0,1,"a"]})",
      R"({"page":1,"kind":"figure","bbox":[0,0,1,1],"colour":"red"})",
      R"({"page":1,"kind":"figure","bbox":[0,0,1,1],"font_bold":"yes"})",
      R"([1,2,3])",
  };
  for (const char* line : bad) {
    SCOPED_TRACE(line);
    expect_error<MalformedRecord>(std::string(line) + "\n", "MalformedRecord");
  }
}

TEST(ParseLayout, ErrorCarriesLineNumber) {
  std::string raw = text_line(1, 10, "a") + text_line(1, 20, "b") + "{broken\n";
  try {
    parse_layout_stream(raw);
    FAIL();
  } catch (const MalformedRecord& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseLayout, EmptyStream) {
  expect_error<EmptyStream>("", "EmptyStream");
  expect_error<EmptyStream>("\n  \n", "EmptyStream");
  expect_error<EmptyStream>(R"({"meta":{"source_id":"x","page_count":1}})" "\n", "EmptyStream");
}

TEST(ParseLayout, ResortsPageMajor) {
  // Oracle: sort the (page, y0, x0) keys independently and compare.
  std::string raw = text_line(3, 50, "c") + text_line(1, 70, "a") + text_line(2, 10, "b");
  auto s = parse_layout_stream(raw);
  std::vector<std::tuple<int, double, double>> keys = {{3, 50, 72}, {1, 70, 72}, {2, 10, 72}};
  std::sort(keys.begin(), keys.end());
  ASSERT_EQ(s.elements.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.elements[i].page, std::get<0>(keys[i]));
    EXPECT_EQ(s.elements[i].bbox.y0, std::get<1>(keys[i]));
  }
  EXPECT_EQ(s.elements[0].text, "a");
  EXPECT_EQ(s.elements[2].text, "c");
  EXPECT_EQ(s.page_count, 3);
}

TEST(ParseLayout, MetaRecord) {
  std::string raw = R"({"meta":{"source_id":"doc7","page_count":4}})" "\n" + text_line(1, 10, "a");
  auto s = parse_layout_stream(raw);
  EXPECT_EQ(s.source_id, "doc7");
  EXPECT_EQ(s.page_count, 4);
  // An explicit id wins over the meta record.
  EXPECT_EQ(parse_layout_stream(raw, "given").source_id, "given");
  expect_error<MalformedRecord>(
      R"({"meta":{"page_count":1}})" "\n" + text_line(2, 10, "a"), "MalformedRecord");
}

TEST(ParseLayout, DeterministicAndRoundTrips) {
  for (const char* name : test::kLayoutFixtures) {
    SCOPED_TRACE(name);
    auto raw = test::read(test::fixture(std::string("layout/") + name + ".layout.jsonl"));
    auto a = parse_layout_stream(raw);
    auto b = parse_layout_stream(raw);
    EXPECT_EQ(a, b);
    EXPECT_EQ(parse_layout_stream(to_jsonl(a)), a);
  }
}

TEST(ParseLayout, OptionalFieldsAbsentMeansNotPresent) {
  auto s = parse_layout_stream(R"({"page":1,"kind":"equation","bbox":[0,0,10,10]})" "\n");
  const auto& el = s.elements[0];
  EXPECT_EQ(el.kind, ElementKind::Equation);
  EXPECT_TRUE(el.text.empty());
  EXPECT_FALSE(el.font_size);
  EXPECT_FALSE(el.font_bold);
  EXPECT_FALSE(el.caption);
  auto line = element_to_json(el);
  EXPECT_FALSE(line.contains("text"));
  EXPECT_FALSE(line.contains("caption"));
}

TEST(PageNumberText, Patterns) {
  for (const char* yes : {"1", " 12 ", "iv", "XII", "3 / 10", "3/10"}) EXPECT_TRUE(is_page_number_text(yes)) << yes;
  for (const char* no : {"", "1.2", "Page 3", "abc", "Chapter 1"}) EXPECT_FALSE(is_page_number_text(no)) << no;
}

namespace {

LayoutStream ten_page_header_stream() {
  LayoutStream s;
  s.page_count = 10;
  for (int p = 1; p <= 10; ++p) {
    if (p != 1) {
      LayoutElement h;
      h.page = p;
      h.kind = ElementKind::TextLine;
      h.bbox = {200, 20, 400, 30};
      h.text = "Running Title";
      s.elements.push_back(h);
    }
    LayoutElement body;
    body.page = p;
    body.kind = ElementKind::TextLine;
    body.bbox = {72, 100.0 + p, 500, 110.0 + p};
    body.text = "Body text unique to page " + std::string(1, static_cast<char>('A' + p));
    s.elements.push_back(body);
  }
  normalize_order(s.elements);
  return s;
}

}  // namespace

TEST(ClassifyFurniture, NineOfTenPagesBecomeHeaders) {
  auto in = ten_page_header_stream();
  auto out = classify_furniture(in);
  // Oracle: count the repeats directly.
  std::size_t expected = std::count_if(in.elements.begin(), in.elements.end(),
                                       [](const auto& e) { return e.text == "Running Title"; });
  ASSERT_EQ(expected, 9u);
  std::size_t headers = 0;
  for (const auto& e : out.elements) {
    if (e.kind == ElementKind::Header) {
      ++headers;
      EXPECT_EQ(e.text, "Running Title");
    }
  }
  EXPECT_EQ(headers, expected);
}

TEST(ClassifyFurniture, BelowThresholdStaysBody) {
  auto s = ten_page_header_stream();
  // Keep the running title on five pages only: 50% < 60%.
  std::erase_if(s.elements, [](const auto& e) { return e.text == "Running Title" && e.page > 6; });
  auto out = classify_furniture(s);
  for (const auto& e : out.elements) EXPECT_EQ(e.kind, ElementKind::TextLine);
}

TEST(ClassifyFurniture, SinglePageUnchanged) {
  LayoutStream s;
  s.page_count = 1;
  for (int i = 0; i < 3; ++i) {
    LayoutElement e;
    e.kind = ElementKind::TextLine;
    e.bbox = {72, 100.0 + 20 * i, 300, 110.0 + 20 * i};
    e.text = "Same text";
    s.elements.push_back(e);
  }
  EXPECT_EQ(classify_furniture(s), s);
}

TEST(ClassifyFurniture, SingletonBodyLineUnchanged) {
  auto s = parse_layout_stream(test::read(test::fixture("layout/furniture.layout.jsonl")));
  auto out = classify_furniture(s);
  std::size_t seen = 0;
  for (const auto& e : out.elements) {
    if (e.text == "Page layout theory") {
      ++seen;
      EXPECT_EQ(e.kind, ElementKind::TextLine);
    }
  }
  EXPECT_EQ(seen, 1u);
}

TEST(ClassifyFurniture, DigitNormalizationClustersChapterHeaders) {
  auto s = parse_layout_stream(test::read(test::fixture("layout/furniture.layout.jsonl")));
  auto out = classify_furniture(s);
  std::size_t headers = 0, footers = 0, numbers = 0;
  for (const auto& e : out.elements) {
    headers += e.kind == ElementKind::Header;
    footers += e.kind == ElementKind::Footer;
    numbers += e.kind == ElementKind::PageNumber;
    if (e.kind == ElementKind::Header) {
      EXPECT_EQ(e.text.rfind("Chapter ", 0), 0u) << e.text;
    }
  }
  EXPECT_EQ(headers, 9u);
  EXPECT_EQ(footers, 10u);
  EXPECT_EQ(numbers, 10u);
  // A phrase repeated on two of ten pages is body text.
  for (const auto& e : out.elements) {
    if (e.text.find("See the appendix") != std::string::npos) {
      EXPECT_EQ(e.kind, ElementKind::TextLine);
    }
  }
}

TEST(ClassifyFurniture, IdempotentAndPreservesElements) {
  std::mt19937 rng(7);
  std::vector<LayoutStream> streams;
  for (const char* name : test::kLayoutFixtures) {
    streams.push_back(parse_layout_stream(test::read(test::fixture(std::string("layout/") + name + ".layout.jsonl"))));
  }
  // Random multi-page streams with some repeated lines.
  for (int trial = 0; trial < 200; ++trial) {
    LayoutStream s;
    s.page_count = 1 + static_cast<int>(rng() % 6);
    int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      LayoutElement e;
      e.page = 1 + static_cast<int>(rng() % s.page_count);
      e.kind = rng() % 5 == 0 ? ElementKind::Figure : ElementKind::TextLine;
      double y = static_cast<double>(rng() % 800);
      double x = static_cast<double>(rng() % 3) * 2.0 + 72;
      e.bbox = {x, y, x + 100, y + 10};
      if (e.kind == ElementKind::TextLine) e.text = "line " + std::to_string(rng() % 4);
      s.elements.push_back(e);
    }
    normalize_order(s.elements);
    streams.push_back(s);
  }
  for (const auto& s : streams) {
    auto once = classify_furniture(s);
    EXPECT_EQ(classify_furniture(once), once);
    ASSERT_EQ(once.elements.size(), s.elements.size());
    for (std::size_t i = 0; i < s.elements.size(); ++i) {
      EXPECT_EQ(once.elements[i].bbox, s.elements[i].bbox);
      EXPECT_EQ(once.elements[i].text, s.elements[i].text);
      EXPECT_EQ(once.elements[i].page, s.elements[i].page);
    }
  }
}
