#pragma once

// Layout interchange format (`.layout.jsonl`) and page-furniture labelling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"

namespace pemuta::layout {

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& reason)
      : Error("MalformedRecord", "line " + std::to_string(line) + ": " + reason), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyStream : public Error {
 public:
  EmptyStream() : Error("EmptyStream", "layout stream contains no elements") {}
};

enum class ElementKind { TextLine, Figure, Table, Equation, Header, Footer, PageNumber, Unknown };

inline std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::TextLine: return "text-line";
    case ElementKind::Figure: return "figure";
    case ElementKind::Table: return "table";
    case ElementKind::Equation: return "equation";
    case ElementKind::Header: return "header";
    case ElementKind::Footer: return "footer";
    case ElementKind::PageNumber: return "page-number";
    case ElementKind::Unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<ElementKind> parse_kind(std::string_view s) {
  for (auto k : {ElementKind::TextLine, ElementKind::Figure, ElementKind::Table,
                 ElementKind::Equation, ElementKind::Header, ElementKind::Footer,
                 ElementKind::PageNumber, ElementKind::Unknown}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool is_furniture(ElementKind k) {
  return k == ElementKind::Header || k == ElementKind::Footer || k == ElementKind::PageNumber;
}

inline bool is_non_textual(ElementKind k) {
  return k == ElementKind::Figure || k == ElementKind::Table || k == ElementKind::Equation;
}

/// Axis-aligned box in PDF points; origin top-left, y grows downward.
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  [[nodiscard]] double center_x() const { return (x0 + x1) / 2; }
  [[nodiscard]] double center_y() const { return (y0 + y1) / 2; }
  bool operator==(const BBox&) const = default;
};

struct LayoutElement {
  int page = 1;
  ElementKind kind = ElementKind::Unknown;
  BBox bbox;
  std::string text;
  std::optional<double> font_size;
  std::optional<bool> font_bold;
  std::optional<std::string> caption;

  [[nodiscard]] bool bold() const { return font_bold.value_or(false); }
  bool operator==(const LayoutElement&) const = default;
};

struct LayoutStream {
  std::string source_id;
  int page_count = 0;
  std::vector<LayoutElement> elements;

  bool operator==(const LayoutStream&) const = default;
};

/// Page-major, then top-to-bottom, then left-to-right. Stable, so equal keys
/// keep input order.
inline void normalize_order(std::vector<LayoutElement>& elements) {
  std::stable_sort(elements.begin(), elements.end(), [](const auto& a, const auto& b) {
    if (a.page != b.page) return a.page < b.page;
    if (a.bbox.y0 != b.bbox.y0) return a.bbox.y0 < b.bbox.y0;
    return a.bbox.x0 < b.bbox.x0;
  });
}

namespace detail {

using nlohmann::json;

inline double number_field(const json& v, std::size_t line, std::string_view key) {
  if (!v.is_number()) throw MalformedRecord(line, std::string(key) + " must be a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) throw MalformedRecord(line, std::string(key) + " must be finite");
  return d;
}

inline LayoutElement parse_record(const json& rec, std::size_t line) {
  static const std::set<std::string> kKnownKeys = {"page",      "kind",      "bbox",   "text",
                                                   "font_size", "font_bold", "caption"};
  if (!rec.is_object()) throw MalformedRecord(line, "record is not an object");
  for (const auto& [key, _] : rec.items()) {
    if (!kKnownKeys.contains(key)) throw MalformedRecord(line, "unknown key '" + key + "'");
  }
  for (const char* required : {"page", "kind", "bbox"}) {
    if (!rec.contains(required)) {
      throw MalformedRecord(line, std::string("missing key '") + required + "'");
    }
  }

  LayoutElement el;
  const auto& page = rec.at("page");
  if (!page.is_number_integer() || page.get<long long>() < 1) {
    throw MalformedRecord(line, "page must be a positive integer");
  }
  el.page = static_cast<int>(page.get<long long>());

  const auto& kind = rec.at("kind");
  if (!kind.is_string()) throw MalformedRecord(line, "kind must be a string");
  auto parsed_kind = parse_kind(kind.get<std::string>());
  if (!parsed_kind) throw MalformedRecord(line, "unknown kind '" + kind.get<std::string>() + "'");
  el.kind = *parsed_kind;

  const auto& bbox = rec.at("bbox");
  if (!bbox.is_array() || bbox.size() != 4) {
    throw MalformedRecord(line, "bbox must be an array of 4 numbers");
  }
  el.bbox = {number_field(bbox[0], line, "bbox"), number_field(bbox[1], line, "bbox"),
             number_field(bbox[2], line, "bbox"), number_field(bbox[3], line, "bbox")};
  if (!(el.bbox.x0 < el.bbox.x1)) throw MalformedRecord(line, "bbox requires x0 < x1");
  if (!(el.bbox.y0 < el.bbox.y1)) throw MalformedRecord(line, "bbox requires y0 < y1");

  if (rec.contains("text")) {
    if (!rec["text"].is_string()) throw MalformedRecord(line, "text must be a string");
    el.text = rec["text"].get<std::string>();
  }
  if (rec.contains("font_size")) {
    el.font_size = number_field(rec["font_size"], line, "font_size");
  }
  if (rec.contains("font_bold")) {
    if (!rec["font_bold"].is_boolean()) throw MalformedRecord(line, "font_bold must be a boolean");
    el.font_bold = rec["font_bold"].get<bool>();
  }
  if (rec.contains("caption")) {
    if (!rec["caption"].is_string()) throw MalformedRecord(line, "caption must be a string");
    el.caption = rec["caption"].get<std::string>();
  }

  if (el.kind == ElementKind::TextLine) {
    if (pemuta::detail::trim(el.text).empty()) {
      throw MalformedRecord(line, "text-line requires non-empty text");
    }
    if (!el.font_size || *el.font_size <= 0) {
      throw MalformedRecord(line, "text-line requires font_size > 0");
    }
  }
  return el;
}

}  // namespace detail

/// Parses `.layout.jsonl` content. Blank lines are skipped. An optional
/// leading `{"meta": {...}}` record may carry `source_id` and `page_count`;
/// otherwise `page_count` is the largest page seen.
inline LayoutStream parse_layout_stream(std::string_view raw, std::string source_id = {}) {
  LayoutStream stream;
  stream.source_id = std::move(source_id);
  std::optional<int> declared_pages;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool seen_record = false;
  while (pos <= raw.size()) {
    auto nl = raw.find('\n', pos);
    auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? raw.size() + 1 : nl + 1;
    ++line_no;
    if (pemuta::detail::trim(line).empty()) continue;

    auto rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) throw MalformedRecord(line_no, "invalid JSON");

    if (!seen_record && rec.is_object() && rec.size() == 1 && rec.contains("meta")) {
      const auto& meta = rec["meta"];
      if (!meta.is_object()) throw MalformedRecord(line_no, "meta must be an object");
      if (meta.contains("source_id") && meta["source_id"].is_string() && stream.source_id.empty()) {
        stream.source_id = meta["source_id"].get<std::string>();
      }
      if (meta.contains("page_count")) {
        if (!meta["page_count"].is_number_integer() || meta["page_count"].get<long long>() < 1) {
          throw MalformedRecord(line_no, "meta.page_count must be a positive integer");
        }
        declared_pages = static_cast<int>(meta["page_count"].get<long long>());
      }
      seen_record = true;
      continue;
    }
    seen_record = true;
    stream.elements.push_back(detail::parse_record(rec, line_no));
  }

  if (stream.elements.empty()) throw EmptyStream();

  int max_page = 0;
  for (const auto& el : stream.elements) max_page = std::max(max_page, el.page);
  if (declared_pages && *declared_pages < max_page) {
    throw MalformedRecord(1, "meta.page_count is smaller than a record's page");
  }
  stream.page_count = declared_pages.value_or(max_page);
  normalize_order(stream.elements);
  return stream;
}

inline nlohmann::json element_to_json(const LayoutElement& el) {
  nlohmann::json rec;
  rec["page"] = el.page;
  rec["kind"] = to_string(el.kind);
  rec["bbox"] = {el.bbox.x0, el.bbox.y0, el.bbox.x1, el.bbox.y1};
  if (!el.text.empty()) rec["text"] = el.text;
  if (el.font_size) rec["font_size"] = *el.font_size;
  if (el.font_bold) rec["font_bold"] = *el.font_bold;
  if (el.caption) rec["caption"] = *el.caption;
  return rec;
}

/// Writes the stream back as `.layout.jsonl` (meta record first).
inline std::string to_jsonl(const LayoutStream& stream) {
  std::string out;
  nlohmann::json meta;
  meta["meta"] = {{"source_id", stream.source_id}, {"page_count", stream.page_count}};
  out += meta.dump() + "\n";
  for (const auto& el : stream.elements) out += element_to_json(el).dump() + "\n";
  return out;
}

struct FurnitureOptions {
  /// Fraction of pages a repeated fragment must appear on.
  double repetition_threshold = 0.6;
  /// Maximum bbox-centre offset (points, per axis) within one repeat cluster.
  double center_tolerance = 5.0;
};

/// Decimal integer, Roman numeral, or "N / M" after trimming.
inline bool is_page_number_text(std::string_view text) {
  static const std::regex kDecimal(R"(^\d+$)");
  static const std::regex kRoman(R"(^M{0,3}(CM|CD|D?C{0,3})(XC|XL|L?X{0,3})(IX|IV|V?I{0,3})$)",
                                 std::regex::icase);
  static const std::regex kOfTotal(R"(^\d+\s*/\s*\d+$)");
  std::string t(pemuta::detail::trim(text));
  if (t.empty()) return false;
  return std::regex_match(t, kDecimal) || std::regex_match(t, kRoman) ||
         std::regex_match(t, kOfTotal);
}

/// Whitespace-collapsed text with every ASCII digit mapped to '#'.
inline std::string furniture_key(std::string_view text) {
  auto s = pemuta::detail::collapse_whitespace(text);
  for (auto& c : s) {
    if (c >= '0' && c <= '9') c = '#';
  }
  return s;
}

/// Re-kinds running headers, footers and page numbers. Elements keep their
/// position; only `kind` changes. Idempotent.
inline LayoutStream classify_furniture(LayoutStream stream, const FurnitureOptions& opts = {}) {
  auto& els = stream.elements;
  auto candidate = [](const LayoutElement& el) {
    return !pemuta::detail::trim(el.text).empty() &&
           (el.kind == ElementKind::TextLine || el.kind == ElementKind::Unknown ||
            is_furniture(el.kind));
  };

  // Page extent proxy for the header/footer split.
  double bottom = 0;
  for (const auto& el : els) bottom = std::max(bottom, el.bbox.y1);
  const double midline = bottom / 2;

  for (auto& el : els) {
    if (candidate(el) && is_page_number_text(el.text)) el.kind = ElementKind::PageNumber;
  }

  if (stream.page_count < 2) return stream;

  struct Cluster {
    double cx, cy;
    std::vector<std::size_t> members;
    std::set<int> pages;
  };
  std::map<std::string, std::vector<Cluster>> groups;
  for (std::size_t i = 0; i < els.size(); ++i) {
    const auto& el = els[i];
    if (!candidate(el)) continue;
    auto& clusters = groups[furniture_key(el.text)];
    Cluster* home = nullptr;
    for (auto& c : clusters) {
      if (std::abs(c.cx - el.bbox.center_x()) <= opts.center_tolerance &&
          std::abs(c.cy - el.bbox.center_y()) <= opts.center_tolerance) {
        home = &c;
        break;
      }
    }
    if (!home) {
      clusters.push_back({el.bbox.center_x(), el.bbox.center_y(), {}, {}});
      home = &clusters.back();
    }
    home->members.push_back(i);
    home->pages.insert(el.page);
  }

  const double needed = opts.repetition_threshold * stream.page_count;
  for (const auto& [key, clusters] : groups) {
    for (const auto& c : clusters) {
      if (c.pages.size() < 2 || static_cast<double>(c.pages.size()) < needed) continue;
      for (auto i : c.members) {
        if (els[i].kind == ElementKind::PageNumber) continue;
        els[i].kind = c.cy < midline ? ElementKind::Header : ElementKind::Footer;
      }
    }
  }
  return stream;
}

}  // namespace pemuta::layout
