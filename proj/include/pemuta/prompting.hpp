#pragma once

// Prompt construction for the three assessment modes:
//
//   composite  one call: dimension instructions (stage 1) and holistic
//              synthesis (stage 2) in a single user message
//   staged     six independent single-dimension calls, then one synthesis
//              call that asks for formative feedback only
//   standard   the single holistic instruction baseline
//
// Role-play adds a system message; few-shot adds score-only exemplar blocks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pemuta/dataset.hpp"
#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"
#include "pemuta/reconstruct.hpp"
#include "pemuta/rubric.hpp"

namespace pemuta::prompting {

using dataset::MissingScore;
using rubric::Dimension;

class InvalidConfig : public Error {
 public:
  explicit InvalidConfig(const std::string& what) : Error("InvalidConfig", what) {}
};

class PoolTooSmall : public Error {
 public:
  PoolTooSmall(std::size_t requested, std::size_t available)
      : Error("PoolTooSmall", "requested " + std::to_string(requested) + " exemplars but only " +
                                  std::to_string(available) + " are eligible") {}
};

class DocumentTooLarge : public Error {
 public:
  DocumentTooLarge(std::size_t estimated, std::size_t budget)
      : Error("DocumentTooLarge", "prompt needs ~" + std::to_string(estimated) +
                                      " tokens, budget is " + std::to_string(budget)),
        estimated_(estimated) {}
  [[nodiscard]] std::size_t estimated_tokens() const noexcept { return estimated_; }

 private:
  std::size_t estimated_;
};

class InvalidTemplate : public Error {
 public:
  explicit InvalidTemplate(const std::string& what) : Error("InvalidTemplate", what) {}
};

enum class Mode { Composite, Staged, Standard };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Composite: return "composite";
    case Mode::Staged: return "staged";
    case Mode::Standard: return "standard";
  }
  return "composite";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::Composite, Mode::Staged, Mode::Standard}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

inline constexpr std::string_view kDefaultPersona =
    "You are a university professor responsible for evaluating students' submitted "
    "undergraduate thesis.";

inline constexpr std::string_view kStandardInstruction =
    "Holistically assess the given thesis on a 1–10 scale";

inline constexpr int kDefaultShotCount = 2;
inline constexpr std::size_t kDefaultContextBudget = 128000;

// Fixed markers the builders emit; tests and the mock scripts key on them.
inline constexpr std::string_view kExemplarMarker = "### Example assessment";
inline constexpr std::string_view kStageMarker = "Dimension under evaluation: ";
inline constexpr std::string_view kThesisIdMarker = "Thesis ID: ";
inline constexpr std::string_view kThesisOpen = "<thesis>";
inline constexpr std::string_view kThesisClose = "</thesis>";
inline constexpr std::string_view kSynthesisMarker = "Dimension-level assessments of this thesis:";

struct PromptConfig {
  Mode mode = Mode::Composite;
  bool use_role_play = true;
  int shot_count = kDefaultShotCount;
  rubric::WeightProfile weight_profile = rubric::uniform_profile();
  std::uint64_t random_seed = 0;
  std::string persona_text{kDefaultPersona};
  std::size_t context_budget_tokens = kDefaultContextBudget;

  void validate() const {
    if (shot_count < 0) throw InvalidConfig("shot_count must be >= 0");
    if (mode == Mode::Standard && shot_count != 0) {
      throw InvalidConfig("standard mode does not take few-shot exemplars");
    }
    if (use_role_play && detail::trim(persona_text).empty()) {
      throw InvalidConfig("role-play requires a non-empty persona");
    }
    if (context_budget_tokens == 0) throw InvalidConfig("context budget must be positive");
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"mode", to_string(mode)},
            {"use_role_play", use_role_play},
            {"shot_count", shot_count},
            {"weight_profile", rubric::to_json(weight_profile)},
            {"random_seed", random_seed},
            {"persona_text", persona_text},
            {"context_budget_tokens", context_budget_tokens}};
  }
};

/// Builds and validates a config; throws InvalidConfig on a bad combination.
inline PromptConfig make_prompt_config(Mode mode, bool role_play, int shots) {
  PromptConfig c;
  c.mode = mode;
  c.use_role_play = role_play;
  c.shot_count = shots;
  c.validate();
  return c;
}

struct Exemplar {
  std::string source_id;
  std::array<rubric::Score, rubric::kDimensionCount> scores{};
  rubric::Score holistic;
  /// Score lines only: six dimensions then holistic, no rationale.
  std::string formatted_text;
};

/// Renders the record's stored scores verbatim; the holistic line is the
/// annotated value, not a recomputation.
inline Exemplar format_exemplar(const dataset::DatasetRecord& record) {
  record.require_complete();
  Exemplar ex;
  ex.source_id = record.id;
  for (auto d : rubric::kDimensions) {
    ex.scores[rubric::index_of(d)] = *record.score(d);
    ex.formatted_text += std::string(rubric::name(d)) + ": " +
                         detail::format_number(record.score(d)->value()) + "\n";
  }
  ex.holistic = *record.holistic;
  ex.formatted_text += "Holistic: " + detail::format_number(record.holistic->value()) + "\n";
  return ex;
}

/// Per-thesis sampling seed derived from the run seed and the thesis id.
inline std::uint64_t exemplar_seed(std::uint64_t run_seed, std::string_view thesis_id) {
  return detail::splitmix64(run_seed ^ detail::fnv1a64(thesis_id));
}

/// Deterministic sample of `k` pool records (never `exclude_id`), in sampled
/// order. Partial Fisher-Yates over a mt19937_64 stream.
inline std::vector<Exemplar> select_exemplars(std::span<const dataset::DatasetRecord> pool,
                                              std::size_t k, std::uint64_t seed,
                                              std::string_view exclude_id = {}) {
  std::vector<const dataset::DatasetRecord*> eligible;
  for (const auto& r : pool) {
    if (r.id != exclude_id) eligible.push_back(&r);
  }
  if (k > eligible.size()) throw PoolTooSmall(k, eligible.size());

  std::mt19937_64 rng(seed);
  std::vector<Exemplar> out;
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + static_cast<std::size_t>(rng() % (eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
    out.push_back(format_exemplar(*eligible[i]));
  }
  return out;
}

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct Message {
  Role role = Role::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

struct PromptBundle {
  std::vector<Message> messages;
  Mode mode = Mode::Composite;
  std::string provenance_hash;

  bool operator==(const PromptBundle&) const = default;

  [[nodiscard]] bool has_system_message() const {
    return std::any_of(messages.begin(), messages.end(),
                       [](const Message& m) { return m.role == Role::System; });
  }
};

/// Character-count heuristic: one token per four code points, rounded up.
inline std::size_t estimate_tokens(std::string_view text) {
  return (detail::utf8_length(text) + 3) / 4;
}

inline std::size_t estimate_tokens(const PromptBundle& bundle) {
  std::size_t chars = 0;
  for (const auto& m : bundle.messages) chars += detail::utf8_length(m.content);
  return (chars + 3) / 4;
}

// ---------------------------------------------------------------------------
// Templates

namespace defaults {

inline constexpr std::string_view kComposite = R"(You will assess the undergraduate thesis below in two stages.

Stage 1: dimension-level assessment. Evaluate each of the six dimensions below on its own, without letting the other dimensions influence it. For every dimension give a score on a 0–10 scale (decimals allowed) and a justification that cites concrete evidence from the thesis.

{{dimension_instructions}}
Stage 2: holistic synthesis. Once all six dimensions are scored, integrate them into formative feedback for the student: the main strengths, the most important weaknesses, and concrete suggestions for revision.

{{exemplars}}{{reply_format}}

{{thesis_id_line}}
<thesis>
{{document}}
</thesis>
)";

inline constexpr std::string_view kDimensionItem = R"(- {{dimension_name}}: {{definition}}
  Aspects: {{aspects}}
)";

inline constexpr std::string_view kStagedDimension = R"(You will assess the undergraduate thesis below on a single dimension.

Dimension under evaluation: {{dimension_name}}
Definition: {{definition}}
Aspects: {{aspects}}

Give a score on a 0–10 scale (decimals allowed) and a justification that cites concrete evidence from the thesis. Judge this dimension only.

{{exemplars}}{{reply_format}}

{{thesis_id_line}}
<thesis>
{{document}}
</thesis>
)";

inline constexpr std::string_view kSynthesis = R"({{thesis_id_line}}
Dimension-level assessments of this thesis:

{{assessments}}
Integrate these assessments into formative feedback for the student: the main strengths, the most important weaknesses, and concrete suggestions for revision. Do not assign any new score.

{{reply_format}}
)";

inline constexpr std::string_view kStandard = R"(Holistically assess the given thesis on a 1–10 scale.

{{reply_format}}

{{thesis_id_line}}
<thesis>
{{document}}
</thesis>
)";

inline constexpr std::string_view kExemplars = R"(Reference assessments of other theses from the same programme (scores only):

{{exemplar_blocks}}
)";

}  // namespace defaults

/// Prompt wording, overridable per institution from a directory of text
/// files named after the fields (`composite.txt`, `dimension_item.txt`, ...).
struct PromptTemplates {
  std::string composite{defaults::kComposite};
  std::string dimension_item{defaults::kDimensionItem};
  std::string staged_dimension{defaults::kStagedDimension};
  std::string synthesis{defaults::kSynthesis};
  std::string standard{defaults::kStandard};
  std::string exemplars{defaults::kExemplars};

  /// Each template with its file name and the placeholders it must carry.
  struct Slot {
    std::string PromptTemplates::*field;
    std::string_view file;
    std::vector<std::string_view> required;
  };

  static const std::vector<Slot>& slots() {
    static const std::vector<Slot> kSlots = {
        {&PromptTemplates::composite, "composite.txt", {"{{document}}", "{{dimension_instructions}}", "{{exemplars}}", "{{reply_format}}"}},
        {&PromptTemplates::dimension_item, "dimension_item.txt", {"{{dimension_name}}", "{{aspects}}"}},
        {&PromptTemplates::staged_dimension, "staged_dimension.txt", {"{{document}}", "{{dimension_name}}", "{{aspects}}", "{{exemplars}}", "{{reply_format}}"}},
        {&PromptTemplates::synthesis, "synthesis.txt", {"{{assessments}}", "{{reply_format}}"}},
        {&PromptTemplates::standard, "standard.txt", {"{{document}}", "{{reply_format}}"}},
        {&PromptTemplates::exemplars, "exemplars.txt", {"{{exemplar_blocks}}"}},
    };
    return kSlots;
  }

  /// Defaults overlaid with whichever files exist in `dir`.
  static PromptTemplates load(const std::filesystem::path& dir) {
    PromptTemplates t;
    if (!std::filesystem::is_directory(dir)) {
      throw InvalidTemplate("template directory not found: " + dir.string());
    }
    for (const auto& slot : slots()) {
      auto path = dir / slot.file;
      if (!std::filesystem::exists(path)) continue;
      auto text = dataset::read_file(path);
      for (auto placeholder : slot.required) {
        if (text.find(placeholder) == std::string::npos) {
          throw InvalidTemplate(std::string(slot.file) + " lacks " + std::string(placeholder));
        }
      }
      t.*(slot.field) = std::move(text);
    }
    return t;
  }

  [[nodiscard]] std::string hash() const {
    std::uint64_t h = detail::fnv1a64("");
    for (const auto& slot : slots()) {
      h = detail::fnv1a64(slot.file, h);
      h = detail::fnv1a64(this->*(slot.field), h);
    }
    return detail::to_hex(h);
  }
};

// ---------------------------------------------------------------------------
// Reply-format stanzas. The report parser is the other side of this contract.

inline std::string dimension_entry_example(Dimension d) {
  return "  \"" + std::string(rubric::key(d)) +
         "\": {\"score\": <0-10>, \"justification\": \"<evidence-based justification>\"}";
}

inline std::string composite_reply_format() {
  std::string s =
      "Reply format: finish your answer with exactly one fenced JSON block of this shape:\n"
      "```json\n{\n";
  for (auto d : rubric::kDimensions) s += dimension_entry_example(d) + ",\n";
  s += "  \"holistic\": <0-10>,\n  \"feedback\": \"<formative feedback>\"\n}\n```";
  return s;
}

inline std::string staged_reply_format(Dimension d) {
  return "Reply format: finish your answer with exactly one fenced JSON block of this shape:\n"
         "```json\n{\n" +
         dimension_entry_example(d) + "\n}\n```";
}

inline std::string synthesis_reply_format() {
  return "Reply format: finish your answer with exactly one fenced JSON block of this shape:\n"
         "```json\n{\"feedback\": \"<formative feedback>\"}\n```";
}

inline std::string standard_reply_format() {
  return "Reply format: finish your answer with exactly one fenced JSON block of this shape:\n"
         "```json\n{\"holistic\": <score>}\n```";
}

inline constexpr std::string_view kReaskSuffix =
    "Reply only with the fenced JSON block described above, with no other text.";

// ---------------------------------------------------------------------------
// Builders

/// Flat text and id of the thesis being assessed.
struct ThesisText {
  std::string id;
  std::string text;

  static ThesisText from(const reconstruct::ReconstructedDocument& doc) {
    return {doc.source_id, reconstruct::render_text(doc)};
  }
};

inline Message role_preamble(const PromptConfig& config) {
  return {Role::System, config.persona_text};
}

namespace detail {

inline std::string thesis_id_line(const ThesisText& thesis) {
  return std::string(kThesisIdMarker) + thesis.id;
}

inline std::string exemplar_section(const PromptTemplates& t, std::span<const Exemplar> exemplars,
                                    std::optional<Dimension> only = std::nullopt) {
  if (exemplars.empty()) return {};
  std::string blocks;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    blocks += std::string(kExemplarMarker) + " " + std::to_string(i + 1) + "\n";
    if (only) {
      blocks += std::string(rubric::name(*only)) + ": " +
                pemuta::detail::format_number(exemplars[i].scores[rubric::index_of(*only)].value()) +
                "\n";
    } else {
      blocks += exemplars[i].formatted_text;
    }
    blocks += "\n";
  }
  return pemuta::detail::render_template(t.exemplars, {{"exemplar_blocks", blocks}}) + "\n";
}

inline std::string bundle_hash(const PromptConfig& config, std::string_view document_id,
                               std::span<const Exemplar> exemplars, const PromptTemplates& t,
                               std::string_view extra = {}) {
  std::string key = config.to_json().dump() + "|" + std::string(document_id) + "|";
  for (const auto& e : exemplars) key += e.source_id + ",";
  key += "|" + t.hash() + "|" + std::string(extra);
  return pemuta::detail::to_hex(pemuta::detail::fnv1a64(key));
}

inline PromptBundle finish(PromptBundle bundle, const PromptConfig& config) {
  auto tokens = estimate_tokens(bundle);
  if (tokens > config.context_budget_tokens) {
    throw DocumentTooLarge(tokens, config.context_budget_tokens);
  }
  return bundle;
}

inline void check_shots(const PromptConfig& config, std::span<const Exemplar> exemplars) {
  if (exemplars.size() != static_cast<std::size_t>(config.shot_count)) {
    throw InvalidConfig("config asks for " + std::to_string(config.shot_count) +
                        " exemplars but " + std::to_string(exemplars.size()) + " were supplied");
  }
}

}  // namespace detail

inline PromptBundle build_composite_prompt(const ThesisText& thesis, const PromptConfig& config,
                                           std::span<const Exemplar> exemplars,
                                           const PromptTemplates& templates = {}) {
  config.validate();
  if (config.mode != Mode::Composite) throw InvalidConfig("composite builder needs composite mode");
  detail::check_shots(config, exemplars);

  std::string instructions;
  for (auto d : rubric::kDimensions) {
    instructions += pemuta::detail::render_template(
        templates.dimension_item, {{"dimension_name", std::string(rubric::name(d))},
                                   {"definition", std::string(rubric::definition(d))},
                                   {"aspects", std::string(rubric::aspects(d))}});
  }

  PromptBundle bundle;
  bundle.mode = Mode::Composite;
  if (config.use_role_play) bundle.messages.push_back(role_preamble(config));
  bundle.messages.push_back(
      {Role::User, pemuta::detail::render_template(
                       templates.composite,
                       {{"dimension_instructions", instructions},
                        {"exemplars", detail::exemplar_section(templates, exemplars)},
                        {"reply_format", composite_reply_format()},
                        {"thesis_id_line", detail::thesis_id_line(thesis)},
                        {"document_id", thesis.id},
                        {"document", thesis.text}})});
  bundle.provenance_hash = detail::bundle_hash(config, thesis.id, exemplars, templates, "composite");
  return detail::finish(std::move(bundle), config);
}

/// Produces the feedback-only synthesis bundle once the six dimension
/// replies are in. The holistic score is computed, never asked for.
class SynthesisBuilder {
 public:
  SynthesisBuilder(ThesisText thesis, PromptConfig config, PromptTemplates templates,
                   std::vector<Exemplar> exemplars)
      : thesis_(std::move(thesis)),
        config_(std::move(config)),
        templates_(std::move(templates)),
        exemplars_(std::move(exemplars)) {}

  [[nodiscard]] PromptBundle build(std::span<const rubric::DimensionAssessment> assessments) const {
    std::string listing;
    for (const auto& a : assessments) {
      listing += std::string(rubric::name(a.dimension)) + " (score " +
                 pemuta::detail::format_number(a.score.value()) + "): " + a.justification + "\n";
    }
    PromptBundle bundle;
    bundle.mode = Mode::Staged;
    if (config_.use_role_play) bundle.messages.push_back(role_preamble(config_));
    bundle.messages.push_back(
        {Role::User, pemuta::detail::render_template(
                         templates_.synthesis, {{"thesis_id_line", detail::thesis_id_line(thesis_)},
                                                {"document_id", thesis_.id},
                                                {"assessments", listing},
                                                {"reply_format", synthesis_reply_format()}})});
    bundle.provenance_hash =
        detail::bundle_hash(config_, thesis_.id, exemplars_, templates_, "synthesis|" + listing);
    return detail::finish(std::move(bundle), config_);
  }

 private:
  ThesisText thesis_;
  PromptConfig config_;
  PromptTemplates templates_;
  std::vector<Exemplar> exemplars_;
};

struct StagePrompts {
  /// Indexed by rubric::index_of(dimension).
  std::array<PromptBundle, rubric::kDimensionCount> dimension_bundles;
  SynthesisBuilder synthesis;
};

/// One bundle per dimension naming only that dimension. Exemplar blocks are
/// cut down to the dimension's score line.
inline StagePrompts build_stage_prompts(const ThesisText& thesis, const PromptConfig& config,
                                        std::span<const Exemplar> exemplars,
                                        const PromptTemplates& templates = {}) {
  config.validate();
  if (config.mode != Mode::Staged) throw InvalidConfig("stage builder needs staged mode");
  detail::check_shots(config, exemplars);

  std::array<PromptBundle, rubric::kDimensionCount> bundles;
  for (auto d : rubric::kDimensions) {
    PromptBundle bundle;
    bundle.mode = Mode::Staged;
    if (config.use_role_play) bundle.messages.push_back(role_preamble(config));
    bundle.messages.push_back(
        {Role::User, pemuta::detail::render_template(
                         templates.staged_dimension,
                         {{"dimension_name", std::string(rubric::name(d))},
                          {"definition", std::string(rubric::definition(d))},
                          {"aspects", std::string(rubric::aspects(d))},
                          {"exemplars", detail::exemplar_section(templates, exemplars, d)},
                          {"reply_format", staged_reply_format(d)},
                          {"thesis_id_line", detail::thesis_id_line(thesis)},
                          {"document_id", thesis.id},
                          {"document", thesis.text}})});
    bundle.provenance_hash = detail::bundle_hash(config, thesis.id, exemplars, templates,
                                                 "staged|" + std::string(rubric::key(d)));
    bundles[rubric::index_of(d)] = detail::finish(std::move(bundle), config);
  }
  return {std::move(bundles),
          SynthesisBuilder(thesis, config, templates,
                           std::vector<Exemplar>(exemplars.begin(), exemplars.end()))};
}

inline PromptBundle build_standard_prompt(const ThesisText& thesis, const PromptConfig& config,
                                          const PromptTemplates& templates = {}) {
  config.validate();
  if (config.mode != Mode::Standard) throw InvalidConfig("standard builder needs standard mode");

  PromptBundle bundle;
  bundle.mode = Mode::Standard;
  if (config.use_role_play) bundle.messages.push_back(role_preamble(config));
  bundle.messages.push_back(
      {Role::User, pemuta::detail::render_template(
                       templates.standard, {{"reply_format", standard_reply_format()},
                                            {"thesis_id_line", detail::thesis_id_line(thesis)},
                                            {"document_id", thesis.id},
                                            {"document", thesis.text}})});
  bundle.provenance_hash = detail::bundle_hash(config, thesis.id, {}, templates, "standard");
  return detail::finish(std::move(bundle), config);
}

/// The plain baseline: no persona, no exemplars.
inline PromptBundle build_standard_prompt(const ThesisText& thesis) {
  return build_standard_prompt(thesis, make_prompt_config(Mode::Standard, false, 0));
}

}  // namespace pemuta::prompting
