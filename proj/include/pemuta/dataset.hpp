#pragma once

// Expert-annotated records and the delimited manifest that lists them.
//
//   id, doc_path, s, l, o, w, p, r, holistic
//
// One record per line; a leading header line (first field "id") and lines
// starting with '#' are ignored. A blank score field means "not annotated".
// `doc_path` is resolved relative to the manifest's directory.

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"
#include "pemuta/rubric.hpp"

namespace pemuta::dataset {

class ManifestError : public Error {
 public:
  ManifestError(std::size_t line, const std::string& reason)
      : Error("ManifestError", "manifest line " + std::to_string(line) + ": " + reason) {}
  explicit ManifestError(const std::string& reason) : Error("ManifestError", reason) {}
};

class MissingScore : public Error {
 public:
  MissingScore(const std::string& record, std::string_view target)
      : Error("MissingScore", "record " + record + " has no " + std::string(target) + " score") {}
};

struct DatasetRecord {
  std::string id;
  std::filesystem::path doc_path;
  std::array<std::optional<rubric::Score>, rubric::kDimensionCount> dimension_scores;
  std::optional<rubric::Score> holistic;

  [[nodiscard]] std::optional<rubric::Score> score(rubric::Dimension d) const {
    return dimension_scores[rubric::index_of(d)];
  }

  /// Throws MissingScore unless all seven scores are present.
  void require_complete() const {
    for (auto d : rubric::kDimensions) {
      if (!score(d)) throw MissingScore(id, rubric::name(d));
    }
    if (!holistic) throw MissingScore(id, "Holistic");
  }
};

inline std::vector<std::string> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.emplace_back(detail::trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<rubric::Score> parse_score_field(const std::string& field, std::size_t line,
                                                      std::string_view target) {
  if (field.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw ManifestError(line, "score '" + field + "' is not a number");
  }
  if (used != field.size()) throw ManifestError(line, "score '" + field + "' is not a number");
  return rubric::Score(v, target);
}

inline std::vector<DatasetRecord> parse_manifest(std::string_view text,
                                                 const std::filesystem::path& base_dir = {}) {
  std::vector<DatasetRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto fields = split_fields(trimmed);
    if (fields.size() != 9) {
      throw ManifestError(line_no, "expected 9 fields, found " + std::to_string(fields.size()));
    }
    if (detail::to_lower_ascii(fields[0]) == "id") continue;
    if (fields[0].empty()) throw ManifestError(line_no, "empty record id");

    DatasetRecord r;
    r.id = fields[0];
    if (!fields[1].empty()) {
      std::filesystem::path p(fields[1]);
      r.doc_path = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }
    for (auto d : rubric::kDimensions) {
      r.dimension_scores[rubric::index_of(d)] =
          parse_score_field(fields[2 + rubric::index_of(d)], line_no, rubric::name(d));
    }
    r.holistic = parse_score_field(fields[8], line_no, "Holistic");
    for (const auto& other : records) {
      if (other.id == r.id) throw ManifestError(line_no, "duplicate record id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("IoError", "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<DatasetRecord> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

/// Inverse of parse_manifest; paths are written as given.
inline std::string to_manifest(const std::vector<DatasetRecord>& records) {
  std::string out = "id,doc_path,s,l,o,w,p,r,holistic\n";
  for (const auto& r : records) {
    out += r.id + "," + r.doc_path.generic_string();
    for (auto d : rubric::kDimensions) {
      out += ",";
      if (auto s = r.score(d)) out += detail::format_number(s->value());
    }
    out += ",";
    if (r.holistic) out += detail::format_number(r.holistic->value());
    out += "\n";
  }
  return out;
}

}  // namespace pemuta::dataset
