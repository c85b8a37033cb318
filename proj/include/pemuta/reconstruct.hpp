#pragma once

// Section-structured document reconstruction and its canonical JSON form.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"
#include "pemuta/layout.hpp"

namespace pemuta::reconstruct {

using layout::ElementKind;
using layout::LayoutElement;
using layout::LayoutStream;

class EmptyDocument : public Error {
 public:
  EmptyDocument() : Error("EmptyDocument", "no body text remains after furniture removal") {}
};

class SchemaViolation : public Error {
 public:
  explicit SchemaViolation(const std::string& what) : Error("SchemaViolation", what) {}
};

enum class SectionLabel { Abstract, Toc, NumberedSection, References, Appendix, Acknowledgments, Other };

inline std::string_view to_string(SectionLabel l) {
  switch (l) {
    case SectionLabel::Abstract: return "abstract";
    case SectionLabel::Toc: return "toc";
    case SectionLabel::NumberedSection: return "numbered-section";
    case SectionLabel::References: return "references";
    case SectionLabel::Appendix: return "appendix";
    case SectionLabel::Acknowledgments: return "acknowledgments";
    case SectionLabel::Other: return "other";
  }
  return "other";
}

inline std::optional<SectionLabel> parse_section_label(std::string_view s) {
  for (auto l : {SectionLabel::Abstract, SectionLabel::Toc, SectionLabel::NumberedSection,
                 SectionLabel::References, SectionLabel::Appendix, SectionLabel::Acknowledgments,
                 SectionLabel::Other}) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

struct SectionBoundary {
  std::size_t element_index = 0;
  SectionLabel label = SectionLabel::Other;
  /// Dotted path for numbered sections ("2.3" -> {2, 3}); empty otherwise.
  std::vector<int> number;
  std::string heading_text;

  bool operator==(const SectionBoundary&) const = default;
};

struct Paragraph {
  std::string text;
  bool operator==(const Paragraph&) const = default;
};

enum class PlaceholderKind { Figure, Table, Equation };

inline std::string_view to_string(PlaceholderKind k) {
  switch (k) {
    case PlaceholderKind::Figure: return "figure";
    case PlaceholderKind::Table: return "table";
    case PlaceholderKind::Equation: return "equation";
  }
  return "figure";
}

struct Placeholder {
  PlaceholderKind kind = PlaceholderKind::Figure;
  int ref_id = 1;  // ordinal within kind, reading order
  std::optional<std::string> caption;

  bool operator==(const Placeholder&) const = default;
};

using Block = std::variant<Paragraph, Placeholder>;

struct Section {
  SectionLabel label = SectionLabel::Other;
  std::vector<int> number;
  std::string heading_text;
  std::vector<Block> blocks;

  bool operator==(const Section&) const = default;
};

struct DocumentStats {
  int pages = 0;
  std::size_t elements_in = 0;
  std::size_t furniture_removed = 0;
  std::size_t placeholders_inserted = 0;

  bool operator==(const DocumentStats&) const = default;
};

struct ReconstructedDocument {
  std::string source_id;
  std::string title;
  std::vector<Section> sections;
  DocumentStats stats;

  bool operator==(const ReconstructedDocument&) const = default;
};

struct CanonicalTitle {
  std::string title;
  SectionLabel label;
};

inline std::vector<CanonicalTitle> default_canonical_titles() {
  return {
      {"Abstract", SectionLabel::Abstract},
      {"摘要", SectionLabel::Abstract},
      {"Contents", SectionLabel::Toc},
      {"Table of Contents", SectionLabel::Toc},
      {"Introduction", SectionLabel::Other},
      {"Related Work", SectionLabel::Other},
      {"Conclusion", SectionLabel::Other},
      {"References", SectionLabel::References},
      {"参考文献", SectionLabel::References},
      {"Acknowledgments", SectionLabel::Acknowledgments},
      {"Acknowledgements", SectionLabel::Acknowledgments},
      {"Appendix", SectionLabel::Appendix},
  };
}

struct ReconstructOptions {
  layout::FurnitureOptions furniture;
  /// A vertical step larger than this multiple of the modal line pitch
  /// starts a new paragraph.
  double paragraph_gap_factor = 1.8;
  /// Indent (in ems of the line's font size) that, after sentence-final
  /// punctuation, starts a new paragraph.
  double indent_em = 1.0;
  std::vector<CanonicalTitle> canonical_titles = default_canonical_titles();
};

namespace detail {

/// Most frequent value after rounding to 0.1; ties go to the smaller value.
inline std::optional<double> modal_value(const std::vector<double>& values) {
  std::map<long long, int> counts;
  for (double v : values) ++counts[static_cast<long long>(std::llround(v * 10))];
  std::optional<double> best;
  int best_count = 0;
  for (const auto& [key, count] : counts) {
    if (count > best_count) {
      best_count = count;
      best = static_cast<double>(key) / 10.0;
    }
  }
  return best;
}

inline bool ends_sentence(std::string_view text) {
  auto last = pemuta::detail::last_code_point(pemuta::detail::trim(text));
  return last == "." || last == "!" || last == "?" || last == "。" || last == "！" || last == "？";
}

inline std::string normalize_title(std::string_view text) {
  auto s = pemuta::detail::to_lower_ascii(pemuta::detail::collapse_whitespace(text));
  while (!s.empty() && (s.back() == ':' || s.back() == '.')) s.pop_back();
  return std::string(pemuta::detail::trim(s));
}

inline bool body_line(const LayoutElement& el) {
  return el.kind == ElementKind::TextLine && !pemuta::detail::trim(el.text).empty();
}

}  // namespace detail

/// Modal font size over the stream's text lines.
inline std::optional<double> modal_body_font_size(const LayoutStream& stream) {
  std::vector<double> sizes;
  for (const auto& el : stream.elements) {
    if (detail::body_line(el) && el.font_size) sizes.push_back(*el.font_size);
  }
  return detail::modal_value(sizes);
}

/// Heading lines: a canonical title or a numeric heading pattern, set in a
/// font larger than the body font or in bold.
inline std::vector<SectionBoundary> detect_sections(const LayoutStream& stream,
                                                    const ReconstructOptions& opts = {}) {
  static const std::regex kNumbered(R"(^(\d+(?:\.\d+)*)\s+\S)");
  std::vector<SectionBoundary> out;
  auto body_size = modal_body_font_size(stream);
  if (!body_size) return out;

  for (std::size_t i = 0; i < stream.elements.size(); ++i) {
    const auto& el = stream.elements[i];
    if (!detail::body_line(el)) continue;
    const bool emphasized = el.bold() || el.font_size.value_or(0) >= *body_size + 0.05;
    if (!emphasized) continue;

    auto heading = pemuta::detail::collapse_whitespace(el.text);
    auto normalized = detail::normalize_title(heading);
    std::optional<SectionBoundary> found;
    for (const auto& t : opts.canonical_titles) {
      if (detail::normalize_title(t.title) == normalized) {
        found = SectionBoundary{i, t.label, {}, heading};
        break;
      }
    }
    std::smatch m;
    if (!found && std::regex_search(heading, m, kNumbered)) {
      SectionBoundary b{i, SectionLabel::NumberedSection, {}, heading};
      std::string path = m[1].str();
      std::size_t start = 0;
      bool valid = true;
      while (start <= path.size()) {
        auto dot = path.find('.', start);
        auto part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        int n = part.size() > 9 ? 0 : std::stoi(part);
        if (n <= 0) valid = false;
        b.number.push_back(n);
        if (dot == std::string::npos) break;
        start = dot + 1;
      }
      if (valid) found = std::move(b);
    }
    if (found) out.push_back(std::move(*found));
  }
  return out;
}

/// Modal positive vertical step between consecutive same-page lines.
inline std::optional<double> modal_line_pitch(std::span<const LayoutElement> lines) {
  std::vector<double> steps;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].page != lines[i - 1].page) continue;
    double step = lines[i].bbox.y0 - lines[i - 1].bbox.y0;
    if (step > 0) steps.push_back(step);
  }
  return detail::modal_value(steps);
}

/// Line pitch of the whole document, measured over body-font lines so that
/// headings and short sections do not skew it.
inline std::optional<double> document_line_pitch(const LayoutStream& stream) {
  auto body_size = modal_body_font_size(stream);
  std::vector<LayoutElement> lines;
  for (const auto& el : stream.elements) {
    if (detail::body_line(el) && body_size && std::abs(el.font_size.value_or(0) - *body_size) < 0.05) {
      lines.push_back(el);
    }
  }
  return modal_line_pitch(lines);
}

/// Line index ranges [first, last] of the paragraphs formed from `lines`.
/// Without an explicit `pitch` the modal pitch of `lines` is used.
inline std::vector<std::pair<std::size_t, std::size_t>> paragraph_spans(
    std::span<const LayoutElement> lines, const ReconstructOptions& opts = {},
    std::optional<double> pitch = std::nullopt) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  if (lines.empty()) return spans;

  double margin = lines[0].bbox.x0;
  for (const auto& l : lines) margin = std::min(margin, l.bbox.x0);
  if (!pitch) pitch = modal_line_pitch(lines);

  std::size_t first = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& prev = lines[i - 1];
    const auto& next = lines[i];
    bool split = false;
    if (pitch && next.page == prev.page) {
      split = next.bbox.y0 - prev.bbox.y0 > opts.paragraph_gap_factor * *pitch;
    }
    if (!split && detail::ends_sentence(prev.text)) {
      const double em = next.font_size.value_or(prev.font_size.value_or(10.0));
      split = next.bbox.x0 - margin > opts.indent_em * em;
    }
    if (split) {
      spans.emplace_back(first, i - 1);
      first = i;
    }
  }
  spans.emplace_back(first, lines.size() - 1);
  return spans;
}

/// Joins lines with single spaces; a trailing "word-" followed by a
/// lowercase continuation is de-hyphenated.
inline std::string join_lines(std::span<const LayoutElement> lines) {
  std::string text;
  for (const auto& line : lines) {
    auto piece = pemuta::detail::collapse_whitespace(line.text);
    if (piece.empty()) continue;
    if (text.empty()) {
      text = std::move(piece);
      continue;
    }
    const bool hyphenated = text.size() >= 2 && text.back() == '-' &&
                            std::isalpha(static_cast<unsigned char>(text[text.size() - 2])) &&
                            std::islower(static_cast<unsigned char>(piece.front()));
    if (hyphenated) {
      text.pop_back();
    } else {
      text.push_back(' ');
    }
    text += piece;
  }
  return text;
}

inline std::vector<Paragraph> merge_paragraphs(std::span<const LayoutElement> lines,
                                               const ReconstructOptions& opts = {},
                                               std::optional<double> pitch = std::nullopt) {
  std::vector<Paragraph> out;
  for (auto [first, last] : paragraph_spans(lines, opts, pitch)) {
    auto text = join_lines(lines.subspan(first, last - first + 1));
    if (!text.empty()) out.push_back({std::move(text)});
  }
  return out;
}

/// A section under construction: the stream range it covers and, per block,
/// the stream index of the block's first element.
struct DraftSection {
  Section section;
  std::size_t begin = 0;  // first stream index owned by the section body
  std::size_t end = 0;    // one past the last
  std::vector<std::size_t> anchors;
};

/// Inserts one placeholder per figure/table/equation element of `stream`
/// into the section owning it, after every block that starts before it in
/// reading order. Reading order already encodes bbox position.
inline std::vector<DraftSection> place_placeholders(const LayoutStream& stream,
                                                    std::vector<DraftSection> sections) {
  std::map<PlaceholderKind, int> counters;
  for (std::size_t i = 0; i < stream.elements.size(); ++i) {
    const auto& el = stream.elements[i];
    if (!layout::is_non_textual(el.kind)) continue;
    PlaceholderKind kind = el.kind == ElementKind::Figure  ? PlaceholderKind::Figure
                           : el.kind == ElementKind::Table ? PlaceholderKind::Table
                                                           : PlaceholderKind::Equation;
    Placeholder ph{kind, ++counters[kind], el.caption};

    // Owning section: the last one starting at or before i.
    DraftSection* owner = nullptr;
    for (auto& s : sections) {
      if (s.begin > i) break;
      owner = &s;
    }
    if (!owner) continue;
    auto& anchors = owner->anchors;
    auto pos = static_cast<std::size_t>(
        std::lower_bound(anchors.begin(), anchors.end(), i) - anchors.begin());
    owner->section.blocks.insert(owner->section.blocks.begin() + static_cast<std::ptrdiff_t>(pos),
                                 Block{std::move(ph)});
    anchors.insert(anchors.begin() + static_cast<std::ptrdiff_t>(pos), i);
  }
  return sections;
}

/// Index of the title line: largest font among page-1 text lines that are
/// not section headings, earliest in reading order on ties.
inline std::optional<std::size_t> find_title(const LayoutStream& stream,
                                             const std::vector<SectionBoundary>& boundaries) {
  std::optional<std::size_t> best;
  double best_size = 0;
  std::size_t b = 0;
  for (std::size_t i = 0; i < stream.elements.size(); ++i) {
    const auto& el = stream.elements[i];
    if (el.page != 1) break;
    while (b < boundaries.size() && boundaries[b].element_index < i) ++b;
    if (b < boundaries.size() && boundaries[b].element_index == i) continue;
    if (!detail::body_line(el)) continue;
    double size = el.font_size.value_or(0);
    if (!best || size > best_size) {
      best = i;
      best_size = size;
    }
  }
  return best;
}

inline ReconstructedDocument reconstruct(const LayoutStream& input,
                                         const ReconstructOptions& opts = {}) {
  const auto stream = layout::classify_furniture(input, opts.furniture);
  const auto boundaries = detect_sections(stream, opts);
  const auto title_index = find_title(stream, boundaries);
  const auto pitch = document_line_pitch(stream);

  ReconstructedDocument doc;
  doc.source_id = stream.source_id;
  if (title_index) {
    doc.title = pemuta::detail::collapse_whitespace(stream.elements[*title_index].text);
  }

  std::vector<DraftSection> drafts;
  const std::size_t n = stream.elements.size();
  {
    DraftSection front;
    front.begin = 0;
    front.end = boundaries.empty() ? n : boundaries.front().element_index;
    drafts.push_back(std::move(front));
  }
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    DraftSection d;
    d.section.label = boundaries[k].label;
    d.section.number = boundaries[k].number;
    d.section.heading_text = boundaries[k].heading_text;
    d.begin = boundaries[k].element_index;
    d.end = k + 1 < boundaries.size() ? boundaries[k + 1].element_index : n;
    drafts.push_back(std::move(d));
  }

  bool any_text = false;
  for (auto& d : drafts) {
    std::vector<LayoutElement> lines;
    std::vector<std::size_t> line_index;
    for (std::size_t i = d.begin; i < d.end; ++i) {
      if (i == d.begin && &d != &drafts.front()) continue;  // the heading itself
      if (title_index && i == *title_index) continue;
      if (!detail::body_line(stream.elements[i])) continue;
      lines.push_back(stream.elements[i]);
      line_index.push_back(i);
    }
    for (auto [first, last] : paragraph_spans(lines, opts, pitch)) {
      auto text = join_lines(std::span(lines).subspan(first, last - first + 1));
      if (text.empty()) continue;
      d.section.blocks.emplace_back(Paragraph{std::move(text)});
      d.anchors.push_back(line_index[first]);
      any_text = true;
    }
  }
  if (!any_text) throw EmptyDocument();

  drafts = place_placeholders(stream, std::move(drafts));

  for (std::size_t k = 0; k < drafts.size(); ++k) {
    if (k == 0 && drafts[k].section.blocks.empty()) continue;
    doc.sections.push_back(std::move(drafts[k].section));
  }

  doc.stats.pages = stream.page_count;
  doc.stats.elements_in = stream.elements.size();
  for (const auto& el : stream.elements) {
    if (layout::is_furniture(el.kind)) ++doc.stats.furniture_removed;
    if (layout::is_non_textual(el.kind)) ++doc.stats.placeholders_inserted;
  }
  return doc;
}

inline std::string render_placeholder(const Placeholder& p) {
  switch (p.kind) {
    case PlaceholderKind::Figure:
    case PlaceholderKind::Table: {
      std::string tag = p.kind == PlaceholderKind::Figure ? "FIGURE" : "TABLE";
      std::string out = "[" + tag + " " + std::to_string(p.ref_id);
      if (p.caption && !p.caption->empty()) out += ": " + *p.caption;
      return out + "]";
    }
    case PlaceholderKind::Equation:
      return "[EQUATION " + std::to_string(p.ref_id) + "]";
  }
  return {};
}

/// Flat text embedded in prompts: title, then sections separated by blank
/// lines, one block per line.
inline std::string render_text(const ReconstructedDocument& doc) {
  std::string out;
  if (!doc.title.empty()) out += doc.title + "\n";
  for (const auto& s : doc.sections) {
    if (!out.empty()) out += "\n";
    if (!s.heading_text.empty()) out += s.heading_text + "\n";
    for (const auto& b : s.blocks) {
      if (const auto* p = std::get_if<Paragraph>(&b)) {
        out += p->text + "\n";
      } else {
        out += render_placeholder(std::get<Placeholder>(b)) + "\n";
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical JSON

inline constexpr int kDocumentSchemaVersion = 1;

inline nlohmann::json to_json_value(const ReconstructedDocument& doc) {
  using nlohmann::json;
  json sections = json::array();
  for (const auto& s : doc.sections) {
    json blocks = json::array();
    for (const auto& b : s.blocks) {
      if (const auto* p = std::get_if<Paragraph>(&b)) {
        blocks.push_back({{"type", "paragraph"}, {"text", p->text}});
      } else {
        const auto& ph = std::get<Placeholder>(b);
        json j = {{"type", "placeholder"}, {"kind", to_string(ph.kind)}, {"ref_id", ph.ref_id}};
        if (ph.caption) j["caption"] = *ph.caption;
        blocks.push_back(std::move(j));
      }
    }
    json js = {{"label", to_string(s.label)}, {"heading", s.heading_text}, {"blocks", blocks}};
    if (s.label == SectionLabel::NumberedSection) js["number"] = s.number;
    sections.push_back(std::move(js));
  }
  return {{"schema_version", kDocumentSchemaVersion},
          {"source_id", doc.source_id},
          {"title", doc.title},
          {"sections", sections},
          {"stats",
           {{"pages", doc.stats.pages},
            {"elements_in", doc.stats.elements_in},
            {"furniture_removed", doc.stats.furniture_removed},
            {"placeholders_inserted", doc.stats.placeholders_inserted}}}};
}

/// Canonical bytes: sorted keys, two-space indent, trailing newline.
inline std::string to_json(const ReconstructedDocument& doc) {
  return to_json_value(doc).dump(2) + "\n";
}

namespace detail {

using nlohmann::json;

inline const json& field(const json& obj, const char* key, json::value_t type, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw SchemaViolation(std::string(where) + ": missing '" + key + "'");
  }
  const auto& v = obj.at(key);
  bool ok = v.type() == type ||
            (type == json::value_t::number_unsigned && v.is_number_integer() &&
             v.get<long long>() >= 0);
  if (!ok) throw SchemaViolation(std::string(where) + ": wrong type for '" + key + "'");
  return v;
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                       const char* where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; })) {
      throw SchemaViolation(std::string(where) + ": unexpected key '" + key + "'");
    }
  }
}

}  // namespace detail

inline ReconstructedDocument from_json_value(const nlohmann::json& j) {
  using nlohmann::json;
  using detail::field;
  using vt = json::value_t;
  if (!j.is_object()) throw SchemaViolation("document: not an object");
  detail::check_keys(j, {"schema_version", "source_id", "title", "sections", "stats"}, "document");
  if (field(j, "schema_version", vt::number_unsigned, "document").get<long long>() !=
      kDocumentSchemaVersion) {
    throw SchemaViolation("document: unsupported schema_version");
  }

  ReconstructedDocument doc;
  doc.source_id = field(j, "source_id", vt::string, "document").get<std::string>();
  doc.title = field(j, "title", vt::string, "document").get<std::string>();

  std::map<PlaceholderKind, int> last_ref;
  for (const auto& js : field(j, "sections", vt::array, "document")) {
    detail::check_keys(js, {"label", "heading", "blocks", "number"}, "section");
    Section s;
    auto label = parse_section_label(field(js, "label", vt::string, "section").get<std::string>());
    if (!label) throw SchemaViolation("section: unknown label");
    s.label = *label;
    s.heading_text = field(js, "heading", vt::string, "section").get<std::string>();
    if (s.label == SectionLabel::NumberedSection) {
      const auto& num = field(js, "number", vt::array, "section");
      if (num.empty()) throw SchemaViolation("section: empty number path");
      for (const auto& n : num) {
        if (!n.is_number_integer() || n.get<long long>() < 1) {
          throw SchemaViolation("section: number components must be positive integers");
        }
        s.number.push_back(n.get<int>());
      }
    } else if (js.contains("number")) {
      throw SchemaViolation("section: number only allowed on numbered-section");
    }

    for (const auto& jb : field(js, "blocks", vt::array, "section")) {
      auto type = field(jb, "type", vt::string, "block").get<std::string>();
      if (type == "paragraph") {
        detail::check_keys(jb, {"type", "text"}, "paragraph");
        auto text = field(jb, "text", vt::string, "paragraph").get<std::string>();
        if (text.empty() || text.find_first_of("\r\n") != std::string::npos ||
            pemuta::detail::trim(text).size() != text.size()) {
          throw SchemaViolation("paragraph: text must be non-empty, single-line and trimmed");
        }
        s.blocks.emplace_back(Paragraph{std::move(text)});
      } else if (type == "placeholder") {
        detail::check_keys(jb, {"type", "kind", "ref_id", "caption"}, "placeholder");
        auto kind_name = field(jb, "kind", vt::string, "placeholder").get<std::string>();
        Placeholder ph;
        if (kind_name == "figure") {
          ph.kind = PlaceholderKind::Figure;
        } else if (kind_name == "table") {
          ph.kind = PlaceholderKind::Table;
        } else if (kind_name == "equation") {
          ph.kind = PlaceholderKind::Equation;
        } else {
          throw SchemaViolation("placeholder: unknown kind");
        }
        ph.ref_id = static_cast<int>(
            field(jb, "ref_id", vt::number_unsigned, "placeholder").get<long long>());
        if (ph.ref_id <= last_ref[ph.kind]) {
          throw SchemaViolation("placeholder: ref_id must increase in reading order");
        }
        last_ref[ph.kind] = ph.ref_id;
        if (jb.contains("caption")) {
          ph.caption = field(jb, "caption", vt::string, "placeholder").get<std::string>();
        }
        s.blocks.emplace_back(std::move(ph));
      } else {
        throw SchemaViolation("block: unknown type '" + type + "'");
      }
    }
    doc.sections.push_back(std::move(s));
  }

  const auto& st = field(j, "stats", vt::object, "document");
  detail::check_keys(st, {"pages", "elements_in", "furniture_removed", "placeholders_inserted"},
                     "stats");
  doc.stats.pages = static_cast<int>(field(st, "pages", vt::number_unsigned, "stats").get<long long>());
  doc.stats.elements_in = field(st, "elements_in", vt::number_unsigned, "stats").get<std::size_t>();
  doc.stats.furniture_removed =
      field(st, "furniture_removed", vt::number_unsigned, "stats").get<std::size_t>();
  doc.stats.placeholders_inserted =
      field(st, "placeholders_inserted", vt::number_unsigned, "stats").get<std::size_t>();
  return doc;
}

inline ReconstructedDocument from_json(std::string_view bytes) {
  auto j = nlohmann::json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation("document: not valid JSON");
  return from_json_value(j);
}

}  // namespace pemuta::reconstruct
