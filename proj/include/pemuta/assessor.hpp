#pragma once

// Runs one thesis through a prompting mode against a chat client and turns
// the replies into a report.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pemuta/dataset.hpp"
#include "pemuta/llmclient.hpp"
#include "pemuta/prompting.hpp"
#include "pemuta/report.hpp"

namespace pemuta::assess {

using prompting::Exemplar;
using prompting::Mode;
using prompting::PromptBundle;
using prompting::PromptConfig;
using prompting::PromptTemplates;
using prompting::ThesisText;

struct AssessOptions {
  std::string model_id = "mock";
  double temperature = 0.0;
  int max_output_tokens = 4096;
  /// Retry once with a "block only" follow-up when a reply has no block.
  bool reask = true;
};

/// Exemplars for one thesis: per-thesis seed from (run seed, thesis id); the
/// thesis itself is never its own exemplar.
struct ExemplarDraw {
  std::uint64_t seed = 0;
  std::vector<Exemplar> exemplars;
};

inline ExemplarDraw draw_exemplars(std::span<const dataset::DatasetRecord> pool,
                                   const PromptConfig& config, std::uint64_t run_seed,
                                   std::string_view thesis_id) {
  ExemplarDraw draw;
  draw.seed = prompting::exemplar_seed(run_seed, thesis_id);
  draw.exemplars = prompting::select_exemplars(
      pool, static_cast<std::size_t>(config.shot_count), draw.seed, thesis_id);
  return draw;
}

class Assessor {
 public:
  Assessor(llm::ChatClient& client, AssessOptions options)
      : client_(client), options_(std::move(options)) {}

  report::Outcome assess(const ThesisText& thesis, const PromptConfig& config,
                         std::span<const Exemplar> exemplars, const PromptTemplates& templates,
                         std::uint64_t run_seed = 0, std::uint64_t exemplar_seed = 0) {
    config.validate();
    report::Provenance prov;
    prov.model_id = options_.model_id;
    prov.provider_id = client_.provider_id();
    prov.mode = config.mode;
    prov.shot_count = config.shot_count;
    prov.role_play = config.use_role_play;
    prov.weight_profile = config.weight_profile;
    prov.temperature = options_.temperature;
    prov.run_seed = run_seed;
    prov.exemplar_seed = exemplar_seed;
    for (const auto& e : exemplars) prov.exemplar_ids.push_back(e.source_id);
    prov.template_hash = templates.hash();

    switch (config.mode) {
      case Mode::Composite: {
        auto bundle = prompting::build_composite_prompt(thesis, config, exemplars, templates);
        prov.prompt_hash = bundle.provenance_hash;
        auto parsed = ask<report::ParsedReply>(bundle, prov, [](std::string_view reply) {
          return report::parse_reply(reply, Mode::Composite);
        });
        return report::finalize_report(parsed, thesis.id, config.weight_profile, std::move(prov));
      }
      case Mode::Staged: {
        auto stages = prompting::build_stage_prompts(thesis, config, exemplars, templates);
        report::ParsedReply parsed;
        std::string hashes;
        for (auto d : rubric::kDimensions) {
          const auto& bundle = stages.dimension_bundles[rubric::index_of(d)];
          hashes += bundle.provenance_hash;
          parsed.dimensions.push_back(ask<rubric::DimensionAssessment>(
              bundle, prov,
              [d](std::string_view reply) { return report::parse_dimension_reply(reply, d); }));
        }
        auto synthesis = stages.synthesis.build(parsed.dimensions);
        hashes += synthesis.provenance_hash;
        parsed.feedback = ask<std::string>(synthesis, prov, [](std::string_view reply) {
          return report::parse_feedback_reply(reply);
        });
        prov.prompt_hash = pemuta::detail::to_hex(pemuta::detail::fnv1a64(hashes));
        return report::finalize_report(parsed, thesis.id, config.weight_profile, std::move(prov));
      }
      case Mode::Standard: {
        auto bundle = prompting::build_standard_prompt(thesis, config, templates);
        prov.prompt_hash = bundle.provenance_hash;
        auto parsed = ask<report::ParsedReply>(bundle, prov, [](std::string_view reply) {
          return report::parse_reply(reply, Mode::Standard);
        });
        return report::finalize_holistic_only(parsed, thesis.id, std::move(prov));
      }
    }
    throw prompting::InvalidConfig("unknown mode");
  }

 private:
  llm::ChatRequest request_for(const PromptBundle& bundle) const {
    llm::ChatRequest req;
    req.model_id = options_.model_id;
    req.messages = bundle.messages;
    req.temperature = options_.temperature;
    req.max_output_tokens = options_.max_output_tokens;
    return req;
  }

  template <class T, class Parse>
  T ask(const PromptBundle& bundle, report::Provenance& prov, Parse parse) {
    auto req = request_for(bundle);
    auto reply = client_.chat(req);
    try {
      return parse(reply.content);
    } catch (const report::NoStructuredBlock&) {
      if (!options_.reask) throw;
    }
    req.messages.push_back({prompting::Role::User, std::string(prompting::kReaskSuffix)});
    ++prov.reasks;
    return parse(client_.chat(req).content);
  }

  llm::ChatClient& client_;
  AssessOptions options_;
};

}  // namespace pemuta::assess
