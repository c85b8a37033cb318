#pragma once

// Model replies -> validated assessments -> the final report.
//
// Replies carry one fenced JSON block (```json ... ```). Composite replies
// hold six dimension entries keyed by lower-case dimension name, each
// {"score": <0-10>, "justification": "..."}, plus optional "holistic" and
// "feedback". Standard replies hold {"holistic": <score>}.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"
#include "pemuta/prompting.hpp"
#include "pemuta/rubric.hpp"

namespace pemuta::report {

using rubric::Dimension;
using rubric::DimensionAssessment;
using rubric::MissingDimension;
using rubric::Score;
using rubric::ScoreOutOfRange;

class NoStructuredBlock : public Error {
 public:
  NoStructuredBlock() : Error("NoStructuredBlock", "reply contains no parseable JSON block") {}
};

class DuplicateDimension : public Error {
 public:
  explicit DuplicateDimension(std::string_view dim)
      : Error("DuplicateDimension", "dimension " + std::string(dim) + " appears more than once") {}
};

class InvalidEntry : public Error {
 public:
  InvalidEntry(std::string_view target, const std::string& reason)
      : Error("InvalidEntry", std::string(target) + ": " + reason) {}
};

class InvalidReport : public Error {
 public:
  explicit InvalidReport(const std::string& what) : Error("InvalidReport", what) {}
};

struct StructuredBlock {
  nlohmann::json value;
  /// Top-level keys in source order, duplicates included.
  std::vector<std::string> keys;
};

namespace detail {

inline std::optional<StructuredBlock> parse_block(std::string_view text) {
  StructuredBlock block;
  auto callback = [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
      block.keys.push_back(parsed.get<std::string>());
    }
    return true;
  };
  block.value = nlohmann::json::parse(text, callback, false);
  if (block.value.is_discarded() || !block.value.is_object()) return std::nullopt;
  return block;
}

}  // namespace detail

/// The last fenced block whose body is a JSON object; a reply that is a bare
/// JSON object also qualifies.
inline std::optional<StructuredBlock> extract_block(std::string_view text) {
  std::optional<StructuredBlock> found;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body_start = text.find('\n', open + 3);
    if (body_start == std::string_view::npos) break;
    auto close = text.find("```", body_start + 1);
    if (close == std::string_view::npos) break;
    if (auto block = detail::parse_block(text.substr(body_start + 1, close - body_start - 1))) {
      found = std::move(block);
    }
    pos = close + 3;
  }
  if (!found) found = detail::parse_block(pemuta::detail::trim(text));
  return found;
}

inline double parse_score_value(const nlohmann::json& v, std::string_view target) {
  double value = 0;
  if (v.is_number()) {
    value = v.get<double>();
  } else if (v.is_string()) {
    auto s = std::string(pemuta::detail::trim(v.get<std::string>()));
    std::size_t used = 0;
    try {
      value = std::stod(s, &used);
    } catch (const std::exception&) {
      throw InvalidEntry(target, "score is not a number");
    }
    if (used != s.size()) throw InvalidEntry(target, "score is not a number");
  } else {
    throw InvalidEntry(target, "score is not a number");
  }
  if (!(value >= rubric::kMinScore && value <= rubric::kMaxScore)) {
    throw ScoreOutOfRange(std::string(target), value);
  }
  return value;
}

inline DimensionAssessment parse_dimension_entry(Dimension d, const nlohmann::json& entry) {
  const auto name = rubric::name(d);
  if (!entry.is_object()) throw InvalidEntry(name, "entry must be an object");
  if (!entry.contains("score")) throw InvalidEntry(name, "missing score");
  DimensionAssessment a;
  a.dimension = d;
  a.score = Score(parse_score_value(entry.at("score"), name));
  if (!entry.contains("justification") || !entry.at("justification").is_string()) {
    throw InvalidEntry(name, "missing justification");
  }
  a.justification = pemuta::detail::collapse_whitespace(entry.at("justification").get<std::string>());
  if (a.justification.empty()) throw InvalidEntry(name, "empty justification");
  return a;
}

struct ParsedReply {
  /// Canonical dimension order once validated; empty for standard mode.
  std::vector<DimensionAssessment> dimensions;
  std::optional<double> stated_holistic;
  std::string feedback;
};

/// Parses one reply. Composite replies must carry all six dimensions;
/// standard replies carry only the holistic number. Each failure surfaces as
/// exactly one typed error.
inline ParsedReply parse_reply(std::string_view text, prompting::Mode mode) {
  auto block = extract_block(text);
  if (!block) throw NoStructuredBlock();
  const auto& obj = block->value;
  ParsedReply out;

  if (mode == prompting::Mode::Standard) {
    for (const auto& k : block->keys) {
      if (pemuta::detail::to_lower_ascii(k) == "holistic") {
        out.stated_holistic = parse_score_value(obj.at(k), "Holistic");
        return out;
      }
    }
    throw InvalidEntry("Holistic", "missing holistic score");
  }

  std::array<std::optional<DimensionAssessment>, rubric::kDimensionCount> seen;
  for (const auto& k : block->keys) {
    if (auto d = rubric::parse_dimension(k)) {
      auto& slot = seen[rubric::index_of(*d)];
      if (slot) throw DuplicateDimension(rubric::name(*d));
      slot = parse_dimension_entry(*d, obj.at(k));
    }
  }
  for (auto d : rubric::kDimensions) {
    if (!seen[rubric::index_of(d)]) throw MissingDimension(rubric::name(d));
    out.dimensions.push_back(*seen[rubric::index_of(d)]);
  }
  for (const auto& [k, v] : obj.items()) {
    auto lowered = pemuta::detail::to_lower_ascii(k);
    if (lowered == "holistic") out.stated_holistic = parse_score_value(v, "Holistic");
    if (lowered == "feedback") {
      if (!v.is_string()) throw InvalidEntry("feedback", "must be a string");
      out.feedback = std::string(pemuta::detail::trim(v.get<std::string>()));
    }
  }
  return out;
}

/// One staged reply: the block must hold the requested dimension.
inline DimensionAssessment parse_dimension_reply(std::string_view text, Dimension d) {
  auto block = extract_block(text);
  if (!block) throw NoStructuredBlock();
  std::optional<std::string> key;
  for (const auto& k : block->keys) {
    if (rubric::parse_dimension(k) == d) {
      if (key) throw DuplicateDimension(rubric::name(d));
      key = k;
    }
  }
  if (!key) throw MissingDimension(rubric::name(d));
  return parse_dimension_entry(d, block->value.at(*key));
}

/// Synthesis reply: the block's "feedback" string, or the whole reply when
/// the model answered in prose.
inline std::string parse_feedback_reply(std::string_view text) {
  if (auto block = extract_block(text)) {
    for (const auto& [k, v] : block->value.items()) {
      if (pemuta::detail::to_lower_ascii(k) == "feedback" && v.is_string()) {
        return std::string(pemuta::detail::trim(v.get<std::string>()));
      }
    }
  }
  return std::string(pemuta::detail::trim(text));
}

/// Weighted sum of the six scores. Computed as min + sum w*(y - min) / sum w
/// and clamped to [min, max]; equal to the plain weighted sum up to rounding
/// since the weights sum to one.
inline Score aggregate_holistic(const std::array<Score, rubric::kDimensionCount>& scores,
                                const rubric::WeightProfile& profile) {
  double lo = scores[0].value();
  double hi = lo;
  for (const auto& s : scores) {
    lo = std::min(lo, s.value());
    hi = std::max(hi, s.value());
  }
  double weight_sum = 0;
  double acc = 0;
  for (auto d : rubric::kDimensions) {
    double w = profile.weight(d);
    weight_sum += w;
    acc += w * (scores[rubric::index_of(d)].value() - lo);
  }
  return Score(std::clamp(lo + acc / weight_sum, lo, hi));
}

inline Score aggregate_holistic(std::span<const DimensionAssessment> assessments,
                                const rubric::WeightProfile& profile) {
  std::array<std::optional<Score>, rubric::kDimensionCount> slots;
  for (const auto& a : assessments) {
    auto& slot = slots[rubric::index_of(a.dimension)];
    if (slot) throw DuplicateDimension(rubric::name(a.dimension));
    slot = a.score;
  }
  std::array<Score, rubric::kDimensionCount> scores{};
  for (auto d : rubric::kDimensions) {
    if (!slots[rubric::index_of(d)]) throw MissingDimension(rubric::name(d));
    scores[rubric::index_of(d)] = *slots[rubric::index_of(d)];
  }
  return aggregate_holistic(scores, profile);
}

struct Provenance {
  std::string model_id;
  std::string provider_id;
  prompting::Mode mode = prompting::Mode::Composite;
  int shot_count = 0;
  bool role_play = false;
  rubric::WeightProfile weight_profile = rubric::uniform_profile();
  double temperature = 0;
  std::uint64_t run_seed = 0;
  std::uint64_t exemplar_seed = 0;
  std::vector<std::string> exemplar_ids;
  std::string template_hash;
  std::string prompt_hash;
  int reasks = 0;
  std::optional<double> model_stated_holistic;
  std::optional<double> holistic_discrepancy;

  bool operator==(const Provenance&) const = default;
};

struct AssessmentReport {
  std::string source_id;
  std::array<DimensionAssessment, rubric::kDimensionCount> dimensions{};
  Score holistic;
  std::string feedback;
  Provenance provenance;

  [[nodiscard]] const DimensionAssessment& dimension(Dimension d) const {
    return dimensions[rubric::index_of(d)];
  }
  bool operator==(const AssessmentReport&) const = default;
};

/// Result of the standard baseline, which yields a holistic score only.
struct HolisticOnlyResult {
  std::string source_id;
  Score holistic;
  Provenance provenance;

  bool operator==(const HolisticOnlyResult&) const = default;
};

using Outcome = std::variant<AssessmentReport, HolisticOnlyResult>;

/// The computed holistic is authoritative; a model-stated one is kept in
/// provenance along with its distance from the computed value.
inline AssessmentReport finalize_report(const ParsedReply& parsed, std::string source_id,
                                        const rubric::WeightProfile& profile, Provenance provenance) {
  AssessmentReport r;
  r.holistic = aggregate_holistic(parsed.dimensions, profile);
  for (const auto& a : parsed.dimensions) r.dimensions[rubric::index_of(a.dimension)] = a;
  r.source_id = std::move(source_id);
  r.feedback = parsed.feedback;
  provenance.weight_profile = profile;
  provenance.model_stated_holistic = parsed.stated_holistic;
  provenance.holistic_discrepancy.reset();
  if (parsed.stated_holistic) {
    provenance.holistic_discrepancy = std::abs(*parsed.stated_holistic - r.holistic.value());
  }
  r.provenance = std::move(provenance);
  return r;
}

inline HolisticOnlyResult finalize_holistic_only(const ParsedReply& parsed, std::string source_id,
                                                 Provenance provenance) {
  if (!parsed.stated_holistic) throw InvalidEntry("Holistic", "missing holistic score");
  provenance.model_stated_holistic = parsed.stated_holistic;
  return {std::move(source_id), Score(*parsed.stated_holistic, "Holistic"), std::move(provenance)};
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const Provenance& p) {
  nlohmann::json j = {{"model_id", p.model_id},
                      {"provider_id", p.provider_id},
                      {"mode", prompting::to_string(p.mode)},
                      {"shot_count", p.shot_count},
                      {"role_play", p.role_play},
                      {"weight_profile", rubric::to_json(p.weight_profile)},
                      {"temperature", p.temperature},
                      {"seeds", {{"run", p.run_seed}, {"exemplar", p.exemplar_seed}}},
                      {"exemplar_ids", p.exemplar_ids},
                      {"template_hash", p.template_hash},
                      {"prompt_hash", p.prompt_hash},
                      {"reasks", p.reasks}};
  if (p.model_stated_holistic) j["model_stated_holistic"] = *p.model_stated_holistic;
  if (p.holistic_discrepancy) j["holistic_discrepancy"] = *p.holistic_discrepancy;
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  try {
    Provenance p;
    p.model_id = j.at("model_id").get<std::string>();
    p.provider_id = j.at("provider_id").get<std::string>();
    auto mode = prompting::parse_mode(j.at("mode").get<std::string>());
    if (!mode) throw InvalidReport("unknown mode");
    p.mode = *mode;
    p.shot_count = j.at("shot_count").get<int>();
    p.role_play = j.at("role_play").get<bool>();
    p.weight_profile = rubric::profile_from_json(j.at("weight_profile"));
    p.temperature = j.at("temperature").get<double>();
    p.run_seed = j.at("seeds").at("run").get<std::uint64_t>();
    p.exemplar_seed = j.at("seeds").at("exemplar").get<std::uint64_t>();
    p.exemplar_ids = j.at("exemplar_ids").get<std::vector<std::string>>();
    p.template_hash = j.at("template_hash").get<std::string>();
    p.prompt_hash = j.at("prompt_hash").get<std::string>();
    p.reasks = j.at("reasks").get<int>();
    if (j.contains("model_stated_holistic")) p.model_stated_holistic = j["model_stated_holistic"].get<double>();
    if (j.contains("holistic_discrepancy")) p.holistic_discrepancy = j["holistic_discrepancy"].get<double>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidReport(std::string("provenance: ") + e.what());
  }
}

inline nlohmann::json to_json(const AssessmentReport& r) {
  nlohmann::json dims = nlohmann::json::object();
  for (const auto& a : r.dimensions) {
    dims[std::string(rubric::key(a.dimension))] = {{"score", a.score.value()},
                                                   {"justification", a.justification}};
  }
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "assessment"},
          {"source_id", r.source_id},
          {"dimensions", dims},
          {"holistic", r.holistic.value()},
          {"feedback", r.feedback},
          {"provenance", to_json(r.provenance)}};
}

inline nlohmann::json to_json(const HolisticOnlyResult& r) {
  return {{"schema_version", kReportSchemaVersion},
          {"kind", "holistic-only"},
          {"source_id", r.source_id},
          {"holistic", r.holistic.value()},
          {"provenance", to_json(r.provenance)}};
}

inline nlohmann::json to_json(const Outcome& o) {
  return std::visit([](const auto& r) { return to_json(r); }, o);
}

inline Outcome outcome_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw InvalidReport("unsupported schema_version");
    }
    auto kind = j.at("kind").get<std::string>();
    if (kind == "holistic-only") {
      return HolisticOnlyResult{j.at("source_id").get<std::string>(),
                                Score(j.at("holistic").get<double>(), "Holistic"),
                                provenance_from_json(j.at("provenance"))};
    }
    if (kind != "assessment") throw InvalidReport("unknown report kind '" + kind + "'");
    AssessmentReport r;
    r.source_id = j.at("source_id").get<std::string>();
    const auto& dims = j.at("dimensions");
    for (auto d : rubric::kDimensions) {
      const auto k = std::string(rubric::key(d));
      if (!dims.contains(k)) throw MissingDimension(rubric::name(d));
      r.dimensions[rubric::index_of(d)] = {
          d, Score(dims.at(k).at("score").get<double>(), rubric::name(d)),
          dims.at(k).at("justification").get<std::string>()};
    }
    r.holistic = Score(j.at("holistic").get<double>(), "Holistic");
    r.feedback = j.at("feedback").get<std::string>();
    r.provenance = provenance_from_json(j.at("provenance"));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidReport(e.what());
  }
}

inline Outcome parse_outcome(std::string_view bytes) {
  auto j = nlohmann::json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw InvalidReport("report is not valid JSON");
  return outcome_from_json(j);
}

enum class Format { Json, Markdown };

namespace detail {

inline std::string table_cell(std::string_view text) {
  auto s = pemuta::detail::collapse_whitespace(text);
  return pemuta::detail::replace_all(std::move(s), "|", "\\|");
}

inline std::string provenance_markdown(const Provenance& p) {
  std::string out = "## Provenance\n\n";
  out += "- Model: " + p.model_id + " (" + p.provider_id + ")\n";
  out += "- Mode: " + std::string(prompting::to_string(p.mode)) + ", " +
         std::to_string(p.shot_count) + "-shot, role-play " + (p.role_play ? "on" : "off") + "\n";
  out += "- Exemplars: " + (p.exemplar_ids.empty() ? std::string("none") : [&] {
    std::string ids;
    for (const auto& id : p.exemplar_ids) ids += (ids.empty() ? "" : ", ") + id;
    return ids;
  }()) + "\n";
  out += "- Seeds: run " + std::to_string(p.run_seed) + ", exemplar " +
         std::to_string(p.exemplar_seed) + "\n";
  out += "- Template hash: " + p.template_hash + "\n";
  out += "- Prompt hash: " + p.prompt_hash + "\n";
  if (p.model_stated_holistic) {
    out += "- Model-stated holistic: " + pemuta::detail::format_fixed(*p.model_stated_holistic);
    if (p.holistic_discrepancy) {
      out += " (off by " + pemuta::detail::format_fixed(*p.holistic_discrepancy, 2) + ")";
    }
    out += "\n";
  }
  return out;
}

}  // namespace detail

inline std::string render(const AssessmentReport& r, Format format) {
  if (format == Format::Json) return to_json(r).dump(2) + "\n";
  std::string out = "# Assessment report: " + r.source_id + "\n\n";
  out += "| Dimension | Weight | Score | Justification |\n";
  out += "|---|---:|---:|---|\n";
  for (const auto& a : r.dimensions) {
    out += "| " + std::string(rubric::name(a.dimension)) + " | " +
           pemuta::detail::format_fixed(r.provenance.weight_profile.weight(a.dimension), 3) + " | " +
           pemuta::detail::format_fixed(a.score.value()) + " | " + detail::table_cell(a.justification) +
           " |\n";
  }
  out += "\n**Holistic score:** " + pemuta::detail::format_fixed(r.holistic.value()) + "\n\n";
  out += "## Feedback\n\n" + (r.feedback.empty() ? std::string("(none)") : r.feedback) + "\n\n";
  out += detail::provenance_markdown(r.provenance);
  return out;
}

inline std::string render(const HolisticOnlyResult& r, Format format) {
  if (format == Format::Json) return to_json(r).dump(2) + "\n";
  std::string out = "# Assessment report: " + r.source_id + "\n\n";
  out += "**Holistic score:** " + pemuta::detail::format_fixed(r.holistic.value()) + "\n\n";
  out += detail::provenance_markdown(r.provenance);
  return out;
}

inline std::string render(const Outcome& o, Format format) {
  return std::visit([&](const auto& r) { return render(r, format); }, o);
}

}  // namespace pemuta::report
