#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pemuta/reconstruct.hpp"
#include "random_document.hpp"
#include "support.hpp"

using namespace pemuta;
using namespace pemuta::reconstruct;
using layout::ElementKind;
using layout::LayoutElement;

namespace {

LayoutStream load_fixture(const std::string& name) {
  return layout::parse_layout_stream(test::read(test::fixture("layout/" + name + ".layout.jsonl")), name);
}

LayoutElement line(double x0, double y0, const std::string& text, double size = 10, int page = 1) {
  LayoutElement e;
  e.page = page;
  e.kind = ElementKind::TextLine;
  e.bbox = {x0, y0, x0 + 300, y0 + size};
  e.text = text;
  e.font_size = size;
  return e;
}

std::vector<std::string> paragraph_texts(const ReconstructedDocument& doc) {
  std::vector<std::string> out;
  for (const auto& s : doc.sections) {
    for (const auto& b : s.blocks) {
      if (const auto* p = std::get_if<Paragraph>(&b)) out.push_back(p->text);
    }
  }
  return out;
}

/// Every byte of text except whitespace and hyphens, sorted.
std::string char_bag(const std::vector<std::string>& pieces) {
  std::string out;
  for (const auto& p : pieces) {
    for (char c : p) {
      if (c != ' ' && c != '\t' && c != '\n' && c != '-') out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

class GoldenFixture : public ::testing::TestWithParam<const char*> {};

TEST_P(GoldenFixture, ReconstructsToGoldenBytes) {
  const std::string name = GetParam();
  auto doc = reconstruct::reconstruct(load_fixture(name));
  EXPECT_EQ(doc.source_id, name);
  EXPECT_EQ(to_json(doc), test::read(test::fixture("golden/" + name + ".doc.json")));
  EXPECT_EQ(render_text(doc), test::read(test::fixture("golden/" + name + ".txt")));
  // Deterministic across repeated runs.
  EXPECT_EQ(to_json(reconstruct::reconstruct(load_fixture(name))), to_json(doc));
}

TEST_P(GoldenFixture, GoldenRoundTrips) {
  const std::string name = GetParam();
  auto bytes = test::read(test::fixture("golden/" + name + ".doc.json"));
  EXPECT_EQ(to_json(from_json(bytes)), bytes);
}

TEST_P(GoldenFixture, NoFurnitureInParagraphs) {
  const std::string name = GetParam();
  auto stream = load_fixture(name);
  auto classified = layout::classify_furniture(stream);
  auto doc = reconstruct::reconstruct(stream);
  auto paragraphs = paragraph_texts(doc);

  std::size_t furniture = 0;
  std::vector<std::string> kept{doc.title};
  for (const auto& s : doc.sections) kept.push_back(s.heading_text);
  for (const auto& p : paragraphs) kept.push_back(p);
  std::vector<std::string> body;
  for (const auto& el : classified.elements) {
    if (layout::is_furniture(el.kind)) {
      ++furniture;
      // Page folios like "3" are too short to search for; the byte bag below covers them.
      if (el.text.size() > 3) {
        for (const auto& p : paragraphs) EXPECT_EQ(p.find(el.text), std::string::npos) << el.text;
      }
    } else if (el.kind == ElementKind::TextLine) {
      body.push_back(el.text);
    }
  }
  EXPECT_EQ(doc.stats.furniture_removed, furniture);
  // Kept text is exactly the non-furniture lines: nothing added, nothing lost.
  EXPECT_EQ(char_bag(kept), char_bag(body));
}

TEST_P(GoldenFixture, OnePlaceholderPerNonTextualElement) {
  auto stream = load_fixture(GetParam());
  auto doc = reconstruct::reconstruct(stream);
  std::size_t expected = std::count_if(stream.elements.begin(), stream.elements.end(),
                                       [](const auto& e) { return layout::is_non_textual(e.kind); });
  std::size_t placeholders = 0;
  for (const auto& s : doc.sections) {
    for (const auto& b : s.blocks) placeholders += std::holds_alternative<Placeholder>(b);
  }
  EXPECT_EQ(placeholders, expected);
  EXPECT_EQ(doc.stats.placeholders_inserted, expected);
}

TEST_P(GoldenFixture, TruncatedBytesAreSchemaViolations) {
  auto bytes = test::read(test::fixture(std::string("golden/") + GetParam() + ".doc.json"));
  for (std::size_t cut : {std::size_t{0}, std::size_t{1}, bytes.size() / 3, bytes.size() / 2, bytes.size() - 3}) {
    try {
      from_json(bytes.substr(0, cut));
      FAIL() << "cut at " << cut;
    } catch (const SchemaViolation& e) {
      EXPECT_EQ(e.name(), "SchemaViolation");
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, GoldenFixture, ::testing::ValuesIn(test::kLayoutFixtures));

TEST(Reconstruct, ThreeSectionFixture) {
  auto doc = reconstruct::reconstruct(load_fixture("three_sections"));
  EXPECT_EQ(doc.title, "Adaptive Scheduling for Campus Shuttle Networks");
  ASSERT_EQ(doc.sections.size(), 3u);
  EXPECT_EQ(doc.sections[0].label, SectionLabel::Abstract);
  EXPECT_EQ(doc.sections[1].label, SectionLabel::NumberedSection);
  EXPECT_EQ(doc.sections[1].number, std::vector<int>{1});
  EXPECT_EQ(doc.sections[2].label, SectionLabel::References);

  // Figure between the two paragraphs it sits between on the page.
  const auto& intro = doc.sections[1].blocks;
  auto fig = std::find_if(intro.begin(), intro.end(),
                          [](const Block& b) { return std::holds_alternative<Placeholder>(b); });
  ASSERT_NE(fig, intro.end());
  ASSERT_NE(fig, intro.begin());
  ASSERT_NE(fig + 1, intro.end());
  const auto& ph = std::get<Placeholder>(*fig);
  EXPECT_EQ(ph.caption, std::optional<std::string>("Fig. 1. Results"));
  EXPECT_EQ(render_placeholder(ph), "[FIGURE 1: Fig. 1. Results]");
  EXPECT_NE(std::get<Paragraph>(*(fig - 1)).text.find("price sensitive"), std::string::npos);
  EXPECT_EQ(std::get<Paragraph>(*(fig + 1)).text, "Figure 1 shows the observed daily demand curve.");

  // A body line starting with a digit is not a heading and not a folio.
  auto text = render_text(doc);
  EXPECT_NE(text.find("1 apple costs 2 yuan"), std::string::npos);
  EXPECT_NE(text.find("gate counters installed"), std::string::npos);
  EXPECT_EQ(text.find("Undergraduate Thesis, School of Science"), std::string::npos);
}

TEST(Reconstruct, TablesNumberedInReadingOrder) {
  auto doc = reconstruct::reconstruct(load_fixture("placeholders"));
  std::vector<std::pair<PlaceholderKind, int>> seen;
  std::vector<std::optional<std::string>> table_captions;
  for (const auto& s : doc.sections) {
    for (const auto& b : s.blocks) {
      if (const auto* p = std::get_if<Placeholder>(&b)) {
        seen.emplace_back(p->kind, p->ref_id);
        if (p->kind == PlaceholderKind::Table) table_captions.push_back(p->caption);
      }
    }
  }
  std::vector<int> tables;
  for (auto [k, id] : seen) {
    if (k == PlaceholderKind::Table) tables.push_back(id);
  }
  EXPECT_EQ(tables, (std::vector<int>{1, 2}));
  ASSERT_EQ(table_captions.size(), 2u);
  EXPECT_NE(table_captions[0]->find("Table 1"), std::string::npos);
  EXPECT_NE(table_captions[1]->find("Table 2"), std::string::npos);
  // The uncaptioned equation still gets a placeholder.
  EXPECT_NE(render_text(doc).find("[EQUATION 1]"), std::string::npos);
}

TEST(Reconstruct, NoNonTextualElementsMeansNoPlaceholders) {
  auto doc = reconstruct::reconstruct(load_fixture("paragraphs"));
  for (const auto& s : doc.sections) {
    for (const auto& b : s.blocks) EXPECT_TRUE(std::holds_alternative<Paragraph>(b));
  }
}

TEST(Reconstruct, OnlyPageNumbersIsEmptyDocument) {
  LayoutStream s;
  s.page_count = 3;
  for (int p = 1; p <= 3; ++p) {
    auto e = line(290, 800, std::to_string(p), 9, p);
    s.elements.push_back(e);
  }
  try {
    reconstruct::reconstruct(s);
    FAIL();
  } catch (const EmptyDocument& e) {
    EXPECT_EQ(e.name(), "EmptyDocument");
  }
}

TEST(Reconstruct, TitleTieGoesToEarliest) {
  LayoutStream s;
  s.page_count = 1;
  s.elements = {line(72, 50, "First Big Line", 16), line(72, 80, "Second Big Line", 16),
                line(72, 120, "Body text here.", 10), line(72, 134, "More body text.", 10)};
  EXPECT_EQ(reconstruct::reconstruct(s).title, "First Big Line");
}

TEST(DetectSections, CanonicalAndNumbered) {
  LayoutStream s;
  s.page_count = 1;
  auto heading = [](double y, const std::string& t) {
    auto e = line(72, y, t, 12);
    e.font_bold = true;
    return e;
  };
  s.elements = {heading(50, "Abstract"), line(72, 70, "text a."), line(72, 84, "text b."),
                heading(110, "2.3 Results"), line(72, 130, "text c."),
                line(72, 144, "3 apples are not a heading"),  // body font, not bold
                heading(170, "参考文献"), line(72, 190, "[1] ref.")};
  auto b = detect_sections(s);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].label, SectionLabel::Abstract);
  EXPECT_EQ(b[0].element_index, 0u);
  EXPECT_EQ(b[1].label, SectionLabel::NumberedSection);
  EXPECT_EQ(b[1].number, (std::vector<int>{2, 3}));
  EXPECT_EQ(b[1].heading_text, "2.3 Results");
  EXPECT_EQ(b[2].label, SectionLabel::References);
}

TEST(DetectSections, CanonicalTitlesAreConfigurable) {
  LayoutStream s;
  s.page_count = 1;
  auto h = line(72, 50, "Zusammenfassung", 12);
  h.font_bold = true;
  s.elements = {h, line(72, 70, "Text."), line(72, 84, "More.")};
  EXPECT_TRUE(detect_sections(s).empty());
  ReconstructOptions opts;
  opts.canonical_titles.push_back({"Zusammenfassung", SectionLabel::Abstract});
  auto b = detect_sections(s, opts);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].label, SectionLabel::Abstract);
}

TEST(MergeParagraphs, SmallGapMidClauseJoins) {
  std::vector<LayoutElement> lines = {line(72, 100, "The scheduler reads gate counts and"),
                                      line(72, 114, "updates the timetable hourly.")};
  auto p = merge_paragraphs(lines, {}, 14.0);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].text, "The scheduler reads gate counts and updates the timetable hourly.");
}

TEST(MergeParagraphs, SentenceEndThenIndentSplits) {
  std::vector<LayoutElement> lines = {line(72, 100, "The first paragraph ends here."),
                                      line(90, 114, "A new paragraph starts indented.")};
  auto p = merge_paragraphs(lines, {}, 14.0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].text, "A new paragraph starts indented.");
}

TEST(MergeParagraphs, IndentWithoutSentenceEndJoins) {
  std::vector<LayoutElement> lines = {line(72, 100, "A list of items,"), line(90, 114, "continued here.")};
  EXPECT_EQ(merge_paragraphs(lines, {}, 14.0).size(), 1u);
}

TEST(MergeParagraphs, CjkSentenceEndCounts) {
  std::vector<LayoutElement> lines = {line(72, 100, "本文研究调度问题。"), line(92, 114, "第二段开始。")};
  EXPECT_EQ(merge_paragraphs(lines, {}, 14.0).size(), 2u);
}

TEST(MergeParagraphs, LargeGapSplits) {
  std::vector<LayoutElement> lines = {line(72, 100, "one line and"), line(72, 114, "another and"),
                                      line(72, 128, "a third"), line(72, 180, "after a gap")};
  // 52 > 1.8 * 14 = 25.2
  auto p = merge_paragraphs(lines);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].text, "after a gap");

  ReconstructOptions loose;
  loose.paragraph_gap_factor = 4.0;
  EXPECT_EQ(merge_paragraphs(lines, loose).size(), 1u);
}

TEST(MergeParagraphs, SingleLineIsItself) {
  std::vector<LayoutElement> lines = {line(72, 100, "  Only   one line.  ")};
  auto p = merge_paragraphs(lines);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].text, "Only one line.");
}

TEST(MergeParagraphs, Dehyphenates) {
  std::vector<LayoutElement> lines = {line(72, 100, "the gate coun-"), line(72, 114, "ters report"),
                                      line(72, 128, "a well-"), line(72, 142, "Known case")};
  auto p = merge_paragraphs(lines, {}, 14.0);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].text, "the gate counters report a well- Known case");
}

// ---------------------------------------------------------------------------
// Round trip on random valid documents

TEST(DocumentJson, RandomRoundTrips) {
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 1000; ++i) {
    auto doc = test::random_document(rng);
    auto bytes = to_json(doc);
    auto back = from_json(bytes);
    ASSERT_EQ(back, doc) << bytes;
    ASSERT_EQ(to_json(back), bytes);
  }
}

TEST(DocumentJson, RejectsSchemaBreaks) {
  auto good = nlohmann::json::parse(test::read(test::fixture("golden/three_sections.doc.json")));
  auto expect_violation = [](const nlohmann::json& j) {
    EXPECT_THROW(from_json_value(j), SchemaViolation) << j.dump();
  };
  {
    auto j = good;
    j["extra"] = 1;
    expect_violation(j);
  }
  {
    auto j = good;
    j["schema_version"] = 2;
    expect_violation(j);
  }
  {
    auto j = good;
    j["sections"][0]["label"] = "preface";
    expect_violation(j);
  }
  {
    auto j = good;
    j["sections"][0]["blocks"][0]["text"] = " padded ";
    expect_violation(j);
  }
  {
    auto j = good;
    j["sections"][1]["number"] = nlohmann::json::array();
    expect_violation(j);
  }
  {
    auto j = good;
    j["stats"]["pages"] = -1;
    expect_violation(j);
  }
  {
    auto j = good;
    j.erase("title");
    expect_violation(j);
  }
}
