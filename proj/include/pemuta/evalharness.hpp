#pragma once

// Runs assessment configurations over an annotated dataset, pairs the
// predictions with expert scores and writes the result tables.

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pemuta/assessor.hpp"
#include "pemuta/dataset.hpp"
#include "pemuta/layout.hpp"
#include "pemuta/llmclient.hpp"
#include "pemuta/metrics.hpp"
#include "pemuta/prompting.hpp"
#include "pemuta/reconstruct.hpp"
#include "pemuta/report.hpp"

namespace pemuta::eval {

namespace fs = std::filesystem;
using prompting::Mode;
using prompting::PromptConfig;

/// A labelled configuration, one row of the matrix.
struct MatrixConfig {
  std::string label;
  PromptConfig config;

  /// Hierarchical instructions are present in every mode except standard.
  [[nodiscard]] bool hierarchical() const { return config.mode != Mode::Standard; }
  [[nodiscard]] bool role_play() const { return config.use_role_play; }
  [[nodiscard]] bool few_shot() const { return config.shot_count > 0; }
};

inline MatrixConfig make_matrix_config(std::string label, Mode mode, bool role, int shots,
                                       const rubric::WeightProfile& profile) {
  auto c = prompting::make_prompt_config(mode, role, shots);
  c.weight_profile = profile;
  return {std::move(label), c};
}

/// Component ablation: the baseline, then hierarchical prompting combined
/// with role-play, with few-shot, and with both.
inline std::vector<MatrixConfig> component_presets(
    const rubric::WeightProfile& profile = rubric::uniform_profile(), Mode hp_mode = Mode::Composite) {
  const std::string suffix = hp_mode == Mode::Composite ? "" : "-staged";
  return {make_matrix_config("standard", Mode::Standard, false, 0, profile),
          make_matrix_config("hp+rp" + suffix, hp_mode, true, 0, profile),
          make_matrix_config("hp+fs" + suffix, hp_mode, false, prompting::kDefaultShotCount, profile),
          make_matrix_config("full" + suffix, hp_mode, true, prompting::kDefaultShotCount, profile)};
}

/// Exemplar-count sweep over the full configuration.
inline std::vector<MatrixConfig> shot_presets(const rubric::WeightProfile& profile = rubric::uniform_profile(),
                                              Mode hp_mode = Mode::Composite, int max_shots = 3) {
  const std::string suffix = hp_mode == Mode::Composite ? "" : "-staged";
  std::vector<MatrixConfig> out;
  for (int k = 0; k <= max_shots; ++k) {
    out.push_back(make_matrix_config("full-" + std::to_string(k) + "shot" + suffix, hp_mode, true, k, profile));
  }
  return out;
}

/// Named preset lists: "components", "shots", "all" (both), "staged" (both
/// sweeps in staged mode).
inline std::vector<MatrixConfig> preset(std::string_view name, const rubric::WeightProfile& profile) {
  if (name == "components") return component_presets(profile);
  if (name == "shots") return shot_presets(profile);
  auto both = [&](Mode m) {
    auto out = component_presets(profile, m);
    for (auto& c : shot_presets(profile, m)) out.push_back(std::move(c));
    return out;
  };
  if (name == "all") return both(Mode::Composite);
  if (name == "staged") {
    auto out = both(Mode::Staged);
    out.erase(out.begin());  // the standard baseline is mode-independent
    return out;
  }
  throw prompting::InvalidConfig("unknown preset '" + std::string(name) +
                                 "' (expected components, shots, all or staged)");
}

/// Loads a thesis from `.doc.json` or `.layout.jsonl`. The record id names
/// the thesis in prompts.
inline prompting::ThesisText load_thesis(const fs::path& path, const std::string& id) {
  auto bytes = dataset::read_file(path);
  reconstruct::ReconstructedDocument doc;
  if (pemuta::detail::ends_with(path.filename().string(), ".layout.jsonl")) {
    doc = reconstruct::reconstruct(layout::parse_layout_stream(bytes, id));
  } else {
    doc = reconstruct::from_json(bytes);
  }
  return {id, reconstruct::render_text(doc)};
}

struct RowResult {
  MatrixConfig config;
  std::vector<TargetResult> targets;
  std::vector<std::string> assessed_ids;
  /// "<id>: <ErrorName>: <message>" per failed record.
  std::vector<std::string> failures;

  [[nodiscard]] bool complete() const { return failures.empty(); }
  [[nodiscard]] const TargetResult* find(const Target& t) const {
    for (const auto& r : targets) {
      if (r.target == t) return &r;
    }
    return nullptr;
  }
};

struct MatrixResult {
  std::vector<RowResult> rows;
  nlohmann::json provenance;
};

struct HarnessOptions {
  fs::path out_dir;
  std::uint64_t run_seed = 0;
  prompting::PromptTemplates templates;
  assess::AssessOptions assess;
  /// Reuse per-record reports already on disk.
  bool resume = true;
  /// Optional progress sink.
  std::function<void(const std::string&)> log;
};

namespace detail {

inline double truth_of(const dataset::DatasetRecord& r, const Target& t) {
  return t.dimension ? r.score(*t.dimension)->value() : r.holistic->value();
}

inline std::optional<double> prediction_of(const report::Outcome& o, const Target& t) {
  if (const auto* full = std::get_if<report::AssessmentReport>(&o)) {
    return t.dimension ? full->dimension(*t.dimension).score.value() : full->holistic.value();
  }
  const auto& h = std::get<report::HolisticOnlyResult>(o);
  if (t.dimension) return std::nullopt;
  return h.holistic.value();
}

inline fs::path report_path(const fs::path& out, const std::string& label, const std::string& id) {
  return out / "reports" / label / (id + ".json");
}

}  // namespace detail

/// Assesses every non-pool record under every configuration. Record
/// failures are logged on the row, which is then marked incomplete.
inline MatrixResult run_config_matrix(std::span<const dataset::DatasetRecord> dataset,
                                      std::span<const dataset::DatasetRecord> pool,
                                      const std::vector<MatrixConfig>& configs, llm::ChatClient& client,
                                      const HarnessOptions& options) {
  std::set<std::string> pool_ids;
  for (const auto& p : pool) pool_ids.insert(p.id);
  std::vector<const dataset::DatasetRecord*> evaluated;
  std::vector<std::string> excluded;
  for (const auto& r : dataset) {
    if (pool_ids.count(r.id)) {
      excluded.push_back(r.id);
    } else {
      r.require_complete();
      evaluated.push_back(&r);
    }
  }

  assess::Assessor assessor(client, options.assess);
  std::map<std::string, prompting::ThesisText> theses;
  // Identical configurations under different labels share their outcomes.
  std::map<std::string, std::map<std::string, report::Outcome>> by_config;

  MatrixResult result;
  for (const auto& mc : configs) {
    mc.config.validate();
    RowResult row;
    row.config = mc;
    auto& cache = by_config[mc.config.to_json().dump()];
    std::map<std::string, report::Outcome> outcomes;

    for (const auto* rec : evaluated) {
      const auto path = detail::report_path(options.out_dir, mc.label, rec->id);
      if (auto hit = cache.find(rec->id); hit != cache.end()) {
        if (!options.out_dir.empty()) dataset::write_file(path, report::to_json(hit->second).dump(2) + "\n");
        outcomes.emplace(rec->id, hit->second);
        continue;
      }
      try {
        std::optional<report::Outcome> outcome;
        if (options.resume && !options.out_dir.empty() && fs::exists(path)) {
          outcome = report::parse_outcome(dataset::read_file(path));
        } else {
          if (options.log) options.log("[" + mc.label + "] assessing " + rec->id);
          auto it = theses.find(rec->id);
          if (it == theses.end()) it = theses.emplace(rec->id, load_thesis(rec->doc_path, rec->id)).first;
          auto draw = assess::draw_exemplars(pool, mc.config, options.run_seed, rec->id);
          outcome = assessor.assess(it->second, mc.config, draw.exemplars, options.templates,
                                    options.run_seed, draw.seed);
        }
        if (!options.out_dir.empty()) {
          dataset::write_file(path, report::to_json(*outcome).dump(2) + "\n");
        }
        cache.emplace(rec->id, *outcome);
        outcomes.emplace(rec->id, std::move(*outcome));
      } catch (const Error& e) {
        row.failures.push_back(rec->id + ": " + e.name() + ": " + e.what());
        if (options.log) options.log("[" + mc.label + "] " + row.failures.back());
      }
    }

    for (const auto* rec : evaluated) {
      if (outcomes.count(rec->id)) row.assessed_ids.push_back(rec->id);
    }
    for (const auto& t : all_targets()) {
      std::vector<double> truth;
      std::vector<double> pred;
      for (const auto* rec : evaluated) {
        auto it = outcomes.find(rec->id);
        if (it == outcomes.end()) continue;
        auto p = detail::prediction_of(it->second, t);
        if (!p) continue;
        truth.push_back(detail::truth_of(*rec, t));
        pred.push_back(*p);
      }
      if (mc.config.mode == Mode::Standard && t.dimension) continue;
      row.targets.push_back(evaluate_series(t, ScoreSeries(t.name(), std::move(truth), std::move(pred))));
    }
    result.rows.push_back(std::move(row));
  }

  nlohmann::json cfgs = nlohmann::json::array();
  for (const auto& mc : configs) cfgs.push_back({{"label", mc.label}, {"config", mc.config.to_json()}});
  result.provenance = {{"run_seed", options.run_seed},
                       {"model_id", options.assess.model_id},
                       {"provider_id", client.provider_id()},
                       {"temperature", options.assess.temperature},
                       {"template_hash", options.templates.hash()},
                       {"pacing",
                        {{"min_interval", client.policy().min_interval},
                         {"max_retries", client.policy().max_retries},
                         {"backoff_base", client.policy().backoff_base}}},
                       {"configs", cfgs},
                       {"exemplar_pool_ids", std::vector<std::string>(pool_ids.begin(), pool_ids.end())},
                       {"excluded_from_metrics", excluded},
                       {"evaluated_records", evaluated.size()}};
  return result;
}

// ---------------------------------------------------------------------------
// Output tables

namespace detail {

inline std::string opt_number(const std::optional<double>& v) {
  return v ? pemuta::detail::format_number(*v) : std::string();
}

inline std::string opt_fixed(const std::optional<double>& v, int decimals) {
  return v ? pemuta::detail::format_fixed(*v, decimals) : std::string("n/a");
}

inline const char* tick(bool b) { return b ? "yes" : "no"; }

}  // namespace detail

/// One row per configuration and target.
inline std::string results_csv(const MatrixResult& m) {
  std::string out = "config,mode,hp,rp,fs,shots,target,n,mean,std,mae,mse,pcc,complete\n";
  for (const auto& row : m.rows) {
    for (const auto& t : row.targets) {
      out += row.config.label + "," + std::string(prompting::to_string(row.config.config.mode)) + "," +
             (row.config.hierarchical() ? "1" : "0") + "," + (row.config.role_play() ? "1" : "0") + "," +
             (row.config.few_shot() ? "1" : "0") + "," + std::to_string(row.config.config.shot_count) +
             "," + t.target.key() + "," + std::to_string(t.n) + "," + detail::opt_number(t.mean) + "," +
             detail::opt_number(t.stddev) + "," + detail::opt_number(t.mae) + "," +
             detail::opt_number(t.mse) + "," + detail::opt_number(t.pcc) + "," +
             (row.complete() ? "1" : "0") + "\n";
    }
  }
  return out;
}

inline std::string results_markdown(const MatrixResult& m) {
  std::string out = "# Results\n\n## Holistic agreement\n\n";
  out += "| Config | H-P | R-P | F-S | Shots | N | MAE | MSE | PCC | Complete |\n";
  out += "|---|---|---|---|---:|---:|---:|---:|---:|---|\n";
  for (const auto& row : m.rows) {
    const auto* h = row.find(Target::holistic());
    out += "| " + row.config.label + " | " + detail::tick(row.config.hierarchical()) + " | " +
           detail::tick(row.config.role_play()) + " | " + detail::tick(row.config.few_shot()) + " | " +
           std::to_string(row.config.config.shot_count) + " | " + std::to_string(h ? h->n : 0) + " | " +
           detail::opt_fixed(h ? h->mae : std::nullopt, 3) + " | " +
           detail::opt_fixed(h ? h->mse : std::nullopt, 3) + " | " +
           detail::opt_fixed(h ? h->pcc : std::nullopt, 3) + " | " + detail::tick(row.complete()) + " |\n";
  }
  for (const auto& row : m.rows) {
    out += "\n## " + row.config.label + "\n\n";
    out += "| Target | N | Mean | Std | MAE | MSE | PCC |\n|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& t : row.targets) {
      out += "| " + t.target.name() + " | " + std::to_string(t.n) + " | " + detail::opt_fixed(t.mean, 2) +
             " | " + detail::opt_fixed(t.stddev, 2) + " | " + detail::opt_fixed(t.mae, 3) + " | " +
             detail::opt_fixed(t.mse, 3) + " | " + detail::opt_fixed(t.pcc, 3) + " |\n";
    }
    if (!row.failures.empty()) {
      out += "\nFailures:\n\n";
      for (const auto& f : row.failures) out += "- " + f + "\n";
    }
  }
  return out;
}

inline void write_results(const fs::path& out_dir, const MatrixResult& m) {
  dataset::write_file(out_dir / "results.csv", results_csv(m));
  dataset::write_file(out_dir / "results.md", results_markdown(m));
}

inline std::string stats_csv(const std::vector<TargetStats>& stats) {
  std::string out = "target,n,mean,std,min,max,degenerate\n";
  for (const auto& s : stats) {
    out += s.target.key() + "," + std::to_string(s.n) + "," + pemuta::detail::format_number(s.mean) + "," +
           pemuta::detail::format_number(s.stddev) + "," + pemuta::detail::format_number(s.min) + "," +
           pemuta::detail::format_number(s.max) + "," + (s.degenerate ? "1" : "0") + "\n";
  }
  return out;
}

inline std::string stats_markdown(const std::vector<TargetStats>& stats) {
  std::string out = "| Target | N | Mean | Std | Min | Max |\n|---|---:|---:|---:|---:|---:|\n";
  for (const auto& s : stats) {
    out += "| " + s.target.name() + " | " + std::to_string(s.n) + " | " +
           pemuta::detail::format_fixed(s.mean, 2) + " | " +
           (s.degenerate ? std::string("n/a") : pemuta::detail::format_fixed(s.stddev, 2)) + " | " +
           pemuta::detail::format_fixed(s.min, 2) + " | " + pemuta::detail::format_fixed(s.max, 2) + " |\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Echo scripts

/// Mock script that answers every mode's prompts with each record's expert
/// scores plus `shift` (dimensions, and the holistic in standard mode).
/// Entries match on the thesis id line, so one script serves all configs.
inline std::vector<llm::ScriptEntry> make_echo_script(std::span<const dataset::DatasetRecord> records,
                                                      double shift = 0.0) {
  std::vector<llm::ScriptEntry> script;
  auto fenced = [](const nlohmann::json& j) { return "```json\n" + j.dump(2) + "\n```"; };
  auto shifted = [&](double v) { return rubric::Score(v + shift, "echo").value(); };
  for (const auto& r : records) {
    r.require_complete();
    const std::string id_line = std::string(prompting::kThesisIdMarker) + r.id + "\n";

    llm::ScriptEntry standard;
    standard.contains = {id_line, std::string(prompting::kStandardInstruction)};
    standard.reply = fenced({{"holistic", shifted(r.holistic->value())}});
    script.push_back(standard);

    nlohmann::json all = nlohmann::json::object();
    for (auto d : rubric::kDimensions) {
      nlohmann::json entry = {{"score", shifted(r.score(d)->value())},
                              {"justification", "Echoed expert score for " + std::string(rubric::name(d)) + "."}};
      all[std::string(rubric::key(d))] = entry;
      llm::ScriptEntry staged;
      staged.contains = {id_line, std::string(prompting::kStageMarker) + std::string(rubric::name(d)) + "\n"};
      staged.reply = "Assessment follows.\n" + fenced({{std::string(rubric::key(d)), entry}});
      script.push_back(staged);
    }

    llm::ScriptEntry synthesis;
    synthesis.contains = {id_line, std::string(prompting::kSynthesisMarker)};
    synthesis.reply = fenced({{"feedback", "Echoed feedback."}});
    script.push_back(synthesis);

    all["feedback"] = "Echoed feedback.";
    llm::ScriptEntry composite;
    composite.contains = {id_line};
    composite.reply = fenced(all);
    script.push_back(composite);
  }
  return script;
}

/// The same script as a JSON document loadable by MockProvider::load.
inline nlohmann::json script_to_json(const std::vector<llm::ScriptEntry>& script) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : script) {
    nlohmann::json j = {{"contains", e.contains}};
    if (!e.excludes.empty()) j["excludes"] = e.excludes;
    if (e.reply) j["reply"] = *e.reply;
    if (e.failure) {
      j["error"] = {{"status", e.failure->status}, {"body", e.failure->body}, {"timeout", e.failure->timed_out}};
    }
    if (e.once) j["once"] = true;
    entries.push_back(j);
  }
  return {{"entries", entries}};
}

}  // namespace pemuta::eval
