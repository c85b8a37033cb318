#pragma once

// Command-line front end. `run` is the whole program so tests can drive it
// in-process; tools/pemuta.cpp only forwards argv.
//
// Exit codes: 0 success, 1 pipeline error, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pemuta/assessor.hpp"
#include "pemuta/dataset.hpp"
#include "pemuta/error.hpp"
#include "pemuta/evalharness.hpp"
#include "pemuta/layout.hpp"
#include "pemuta/llmclient.hpp"
#include "pemuta/metrics.hpp"
#include "pemuta/openai_provider.hpp"
#include "pemuta/prompting.hpp"
#include "pemuta/reconstruct.hpp"
#include "pemuta/report.hpp"
#include "pemuta/rubric.hpp"

namespace pemuta::cli {

namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("UsageError", what) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipeline = 1;
inline constexpr int kExitUsage = 2;

/// Exemplar pool used when no `--pool` is given. Same content as
/// data/pool.csv.
inline constexpr std::string_view kBuiltinPool =
    "id,doc_path,s,l,o,w,p,r,holistic\n"
    "pool-a,,8.0,8.5,7.5,8.0,9.0,8.5,8.2\n"
    "pool-b,,7.0,7.5,7.0,7.5,8.0,7.5,7.4\n"
    "pool-c,,9.0,9.0,8.5,9.0,9.5,9.0,9.0\n";

/// Fully resolved settings: defaults, then the config file, then the
/// environment, then flags.
struct RunConfig {
  prompting::Mode mode = prompting::Mode::Composite;
  int shots = prompting::kDefaultShotCount;
  bool role_play = true;
  std::string weights = "uniform";
  rubric::WeightProfile profile = rubric::uniform_profile();
  double min_interval = 30.0;
  int max_retries = 3;
  double backoff_base = 2.0;
  std::uint64_t seed = 0;
  std::string provider = "mock";
  std::string model;
  std::string api_base;
  fs::path script;
  fs::path pool;
  fs::path templates;
  std::string persona{prompting::kDefaultPersona};
  double temperature = 0.0;
  std::size_t budget = prompting::kDefaultContextBudget;
  fs::path out = ".";
  std::string format = "both";
  std::string preset = "all";
  std::string estimator = "sample";

  [[nodiscard]] prompting::PromptConfig prompt_config() const {
    prompting::PromptConfig c;
    c.mode = mode;
    c.use_role_play = role_play;
    c.shot_count = shots;
    c.weight_profile = profile;
    c.random_seed = seed;
    c.persona_text = persona;
    c.context_budget_tokens = budget;
    try {
      c.validate();
    } catch (const prompting::InvalidConfig& e) {
      throw UsageError(e.what());
    }
    return c;
  }

  /// Everything that shapes outputs; credentials are never included.
  [[nodiscard]] nlohmann::json to_json() const {
    return {{"mode", prompting::to_string(mode)},
            {"shots", shots},
            {"role_play", role_play},
            {"weights", weights},
            {"weight_profile", rubric::to_json(profile)},
            {"min_interval", min_interval},
            {"max_retries", max_retries},
            {"backoff_base", backoff_base},
            {"seed", seed},
            {"provider", provider},
            {"model", model},
            {"api_base", api_base},
            {"script", script.generic_string()},
            {"pool", pool.empty() ? std::string("(built-in)") : pool.generic_string()},
            {"templates", templates.empty() ? std::string("(built-in)") : templates.generic_string()},
            {"persona", persona},
            {"temperature", temperature},
            {"budget", budget},
            {"out", out.generic_string()}};
  }
};

inline rubric::WeightProfile resolve_weights(const std::string& spec) {
  if (spec == "uniform") return rubric::uniform_profile();
  if (spec == "core") return rubric::core_weighted_profile();
  if (!fs::exists(spec)) {
    throw UsageError("--weights expects uniform, core or a JSON file; '" + spec + "' not found");
  }
  auto j = nlohmann::json::parse(dataset::read_file(spec), nullptr, false);
  if (j.is_discarded()) throw rubric::InvalidWeights("weights file is not valid JSON: " + spec);
  return rubric::profile_from_json(j);
}

inline prompting::Mode resolve_mode(const std::string& s) {
  auto m = prompting::parse_mode(s);
  if (!m) throw UsageError("unknown mode '" + s + "' (expected composite, staged or standard)");
  return *m;
}

/// Config file: a JSON object with any of the RunConfig keys. Relative
/// paths resolve against the file's directory.
inline void apply_config_file(RunConfig& rc, const fs::path& path) {
  auto j = nlohmann::json::parse(dataset::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw UsageError("config file is not a JSON object: " + path.string());
  const auto base = path.parent_path();
  auto rel = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "mode") rc.mode = resolve_mode(v.get<std::string>());
      else if (k == "shots") rc.shots = v.get<int>();
      else if (k == "role_play") rc.role_play = v.get<bool>();
      else if (k == "weights") {
        if (v.is_object()) {
          rc.profile = rubric::profile_from_json(v);
          rc.weights = "custom";
          continue;
        }
        auto s = v.get<std::string>();
        rc.weights = (s == "uniform" || s == "core") ? s : rel(s).string();
      } else if (k == "min_interval") rc.min_interval = v.get<double>();
      else if (k == "max_retries") rc.max_retries = v.get<int>();
      else if (k == "backoff_base") rc.backoff_base = v.get<double>();
      else if (k == "seed") rc.seed = v.get<std::uint64_t>();
      else if (k == "provider") rc.provider = v.get<std::string>();
      else if (k == "model") rc.model = v.get<std::string>();
      else if (k == "api_base") rc.api_base = v.get<std::string>();
      else if (k == "script") rc.script = rel(v.get<std::string>());
      else if (k == "pool") rc.pool = rel(v.get<std::string>());
      else if (k == "templates") rc.templates = rel(v.get<std::string>());
      else if (k == "persona") rc.persona = v.get<std::string>();
      else if (k == "temperature") rc.temperature = v.get<double>();
      else if (k == "budget") rc.budget = v.get<std::size_t>();
      else if (k == "out") rc.out = rel(v.get<std::string>());
      else if (k == "format") rc.format = v.get<std::string>();
      else if (k == "preset") rc.preset = v.get<std::string>();
      else if (k == "estimator") rc.estimator = v.get<std::string>();
      else throw UsageError("unknown config key '" + k + "' in " + path.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
}

inline void apply_env(RunConfig& rc) {
  if (const char* m = std::getenv(llm::kEnvModel); m && *m) rc.model = m;
  if (const char* b = std::getenv(llm::kEnvApiBase); b && *b) rc.api_base = b;
}

namespace detail {

/// Raw flag storage; a flag only counts when it was given.
struct Flags {
  std::string config;
  std::string mode;
  int shots = 0;
  bool role_play = true;
  std::string weights;
  double min_interval = 0;
  int max_retries = 0;
  std::uint64_t seed = 0;
  std::string provider;
  std::string model;
  std::string script;
  std::string pool;
  std::string templates;
  std::string persona;
  double temperature = 0;
  std::size_t budget = 0;
  std::string out;
  std::string format;
  std::string preset;
  std::string estimator;
  std::vector<std::string> inputs;
};

struct Options {
  CLI::Option* mode = nullptr;
  CLI::Option* shots = nullptr;
  CLI::Option* role_play = nullptr;
  CLI::Option* weights = nullptr;
  CLI::Option* min_interval = nullptr;
  CLI::Option* max_retries = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* provider = nullptr;
  CLI::Option* model = nullptr;
  CLI::Option* script = nullptr;
  CLI::Option* pool = nullptr;
  CLI::Option* templates = nullptr;
  CLI::Option* persona = nullptr;
  CLI::Option* temperature = nullptr;
  CLI::Option* budget = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* format = nullptr;
  CLI::Option* preset = nullptr;
  CLI::Option* estimator = nullptr;
  CLI::Option* config = nullptr;
};

inline bool given(const CLI::Option* o) { return o && o->count() > 0; }

inline void add_common(CLI::App* sub, Flags& f, Options& o) {
  o.config = sub->add_option("--config", f.config, "JSON config file");
  o.out = sub->add_option("--out", f.out, "Output directory (default: current directory)");
}

inline void add_prompt_shape(CLI::App* sub, Flags& f, Options& o) {
  o.mode = sub->add_option("--mode", f.mode, "composite, staged or standard")
               ->check(CLI::IsMember({"composite", "staged", "standard"}));
  o.shots = sub->add_option("--shots", f.shots, "Few-shot exemplars per prompt (default 2)")
                ->check(CLI::NonNegativeNumber);
  o.role_play = sub->add_flag("--role-play,!--no-role-play", f.role_play, "Toggle the persona system message");
}

inline void add_prompting(CLI::App* sub, Flags& f, Options& o) {
  o.seed = sub->add_option("--seed", f.seed, "Run seed for exemplar sampling");
  o.pool = sub->add_option("--pool", f.pool, "Exemplar pool manifest (default: built-in pool)");
  o.templates = sub->add_option("--templates", f.templates, "Directory of prompt template overrides");
  o.persona = sub->add_option("--persona", f.persona, "Role-play persona text");
  o.budget = sub->add_option("--budget", f.budget, "Context budget in estimated tokens");
}

inline void add_provider(CLI::App* sub, Flags& f, Options& o) {
  o.weights = sub->add_option("--weights", f.weights, "uniform, core or a JSON weights file");
  o.min_interval = sub->add_option("--min-interval", f.min_interval, "Seconds between requests (default 30)")
                       ->check(CLI::NonNegativeNumber);
  o.max_retries = sub->add_option("--max-retries", f.max_retries, "Retries for transient failures")
                      ->check(CLI::NonNegativeNumber);
  o.provider = sub->add_option("--provider", f.provider, "mock or openai")
                   ->check(CLI::IsMember({"mock", "openai"}));
  o.model = sub->add_option("--model", f.model, "Model id (default: $PEMUTA_MODEL)");
  o.script = sub->add_option("--script", f.script, "Mock provider script (JSON)");
  o.temperature = sub->add_option("--temperature", f.temperature, "Sampling temperature (default 0)")
                      ->check(CLI::NonNegativeNumber);
}

inline RunConfig resolve(const Flags& f, const Options& o) {
  RunConfig rc;
  if (given(o.config)) apply_config_file(rc, f.config);
  apply_env(rc);
  if (given(o.mode)) rc.mode = resolve_mode(f.mode);
  if (given(o.shots)) rc.shots = f.shots;
  if (given(o.role_play)) rc.role_play = f.role_play;
  if (given(o.weights)) rc.weights = f.weights;
  if (given(o.min_interval)) rc.min_interval = f.min_interval;
  if (given(o.max_retries)) rc.max_retries = f.max_retries;
  if (given(o.seed)) rc.seed = f.seed;
  if (given(o.provider)) rc.provider = f.provider;
  if (given(o.model)) rc.model = f.model;
  if (given(o.script)) rc.script = f.script;
  if (given(o.pool)) rc.pool = f.pool;
  if (given(o.templates)) rc.templates = f.templates;
  if (given(o.persona)) rc.persona = f.persona;
  if (given(o.temperature)) rc.temperature = f.temperature;
  if (given(o.budget)) rc.budget = f.budget;
  if (given(o.out)) rc.out = f.out;
  if (given(o.format)) rc.format = f.format;
  if (given(o.preset)) rc.preset = f.preset;
  if (given(o.estimator)) rc.estimator = f.estimator;
  if (rc.weights != "custom") rc.profile = resolve_weights(rc.weights);
  if (rc.provider != "mock" && rc.provider != "openai") throw UsageError("unknown provider '" + rc.provider + "'");
  if (rc.model.empty()) rc.model = rc.provider == "mock" ? "mock" : "";
  return rc;
}

inline std::shared_ptr<llm::Provider> make_provider(const RunConfig& rc) {
  if (rc.provider == "mock") {
    if (rc.script.empty()) throw UsageError("--provider mock needs --script");
    return llm::MockProvider::load(rc.script);
  }
  if (rc.model.empty()) throw UsageError("--provider openai needs --model or $PEMUTA_MODEL");
  if (rc.api_base.empty()) throw UsageError("--provider openai needs $PEMUTA_API_BASE");
  const char* key = std::getenv(llm::kEnvApiKey);
  return std::make_shared<llm::OpenAIProvider>(rc.api_base, key ? key : "");
}

inline llm::PacingPolicy pacing(const RunConfig& rc) {
  llm::PacingPolicy p;
  p.min_interval = rc.min_interval;
  p.max_retries = rc.max_retries;
  p.backoff_base = rc.backoff_base;
  return p;
}

inline std::vector<dataset::DatasetRecord> load_pool(const RunConfig& rc) {
  if (rc.pool.empty()) return dataset::parse_manifest(kBuiltinPool);
  return dataset::load_manifest(rc.pool);
}

inline prompting::PromptTemplates load_templates(const RunConfig& rc) {
  return rc.templates.empty() ? prompting::PromptTemplates{} : prompting::PromptTemplates::load(rc.templates);
}

inline assess::AssessOptions assess_options(const RunConfig& rc) {
  assess::AssessOptions a;
  a.model_id = rc.model;
  a.temperature = rc.temperature;
  return a;
}

/// File name without the `.layout.jsonl` / `.doc.json` suffix.
inline std::string stem_of(const fs::path& p) {
  auto name = p.filename().string();
  for (std::string_view suffix : {".layout.jsonl", ".doc.json", ".json", ".jsonl"}) {
    if (pemuta::detail::ends_with(name, suffix)) return name.substr(0, name.size() - suffix.size());
  }
  return p.stem().string();
}

inline reconstruct::ReconstructedDocument load_document(const fs::path& p) {
  auto bytes = dataset::read_file(p);
  if (pemuta::detail::ends_with(p.filename().string(), ".layout.jsonl")) {
    return reconstruct::reconstruct(layout::parse_layout_stream(bytes, stem_of(p)));
  }
  return reconstruct::from_json(bytes);
}

inline void write_provenance(const RunConfig& rc, const std::string& command, nlohmann::json extra) {
  nlohmann::json j = {{"command", command}, {"config", rc.to_json()}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  dataset::write_file(rc.out / "provenance.json", j.dump(2) + "\n");
}

inline std::vector<std::string> generic(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(fs::path(p).generic_string());
  return out;
}

inline int cmd_ingest(const RunConfig& rc, const Flags& f, std::ostream& out) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& input : f.inputs) {
    auto stream = layout::parse_layout_stream(dataset::read_file(input), stem_of(input));
    auto doc = reconstruct::reconstruct(stream);
    auto json_path = rc.out / (doc.source_id + ".doc.json");
    dataset::write_file(json_path, reconstruct::to_json(doc));
    dataset::write_file(rc.out / (doc.source_id + ".txt"), reconstruct::render_text(doc));
    out << json_path.generic_string() << "\n";
    docs.push_back({{"input", fs::path(input).generic_string()},
                    {"source_id", doc.source_id},
                    {"input_hash", pemuta::detail::to_hex(pemuta::detail::fnv1a64(dataset::read_file(input)))}});
  }
  write_provenance(rc, "ingest", {{"documents", docs}});
  return kExitOk;
}

inline int cmd_assess(const RunConfig& rc, const Flags& f, std::ostream& out, std::ostream& err) {
  if (rc.format != "json" && rc.format != "markdown" && rc.format != "both") {
    throw UsageError("--format expects json, markdown or both");
  }
  auto config = rc.prompt_config();
  auto templates = load_templates(rc);
  auto pool = load_pool(rc);
  llm::ChatClient client(make_provider(rc), pacing(rc));
  assess::Assessor assessor(client, assess_options(rc));

  nlohmann::json items = nlohmann::json::array();
  for (const auto& input : f.inputs) {
    auto doc = load_document(input);
    auto thesis = prompting::ThesisText::from(doc);
    err << "assessing " << thesis.id << "\n";
    auto draw = assess::draw_exemplars(pool, config, rc.seed, thesis.id);
    auto outcome = assessor.assess(thesis, config, draw.exemplars, templates, rc.seed, draw.seed);
    if (rc.format != "markdown") {
      auto p = rc.out / (thesis.id + ".report.json");
      dataset::write_file(p, report::render(outcome, report::Format::Json));
      out << p.generic_string() << "\n";
    }
    if (rc.format != "json") {
      auto p = rc.out / (thesis.id + ".report.md");
      dataset::write_file(p, report::render(outcome, report::Format::Markdown));
      out << p.generic_string() << "\n";
    }
    items.push_back({{"input", fs::path(input).generic_string()},
                     {"source_id", thesis.id},
                     {"exemplar_seed", draw.seed}});
  }
  write_provenance(rc, "assess",
                   {{"template_hash", templates.hash()},
                    {"pool_ids", [&] {
                       std::vector<std::string> ids;
                       for (const auto& p : pool) ids.push_back(p.id);
                       return ids;
                     }()},
                    {"documents", items}});
  return kExitOk;
}

inline std::string config_label(const prompting::PromptConfig& c) {
  return std::string(prompting::to_string(c.mode)) + (c.use_role_play ? "-rp" : "") + "-" +
         std::to_string(c.shot_count) + "shot";
}

inline int run_matrix(const RunConfig& rc, const Flags& f, const std::string& command,
                      const std::vector<eval::MatrixConfig>& configs, std::ostream& out, std::ostream& err) {
  if (f.inputs.size() != 1) throw UsageError(command + " takes exactly one manifest");
  auto records = dataset::load_manifest(f.inputs.front());
  auto pool = load_pool(rc);
  llm::ChatClient client(make_provider(rc), pacing(rc));

  eval::HarnessOptions opts;
  opts.out_dir = rc.out;
  opts.run_seed = rc.seed;
  opts.templates = load_templates(rc);
  opts.assess = assess_options(rc);
  opts.log = [&err](const std::string& line) { err << line << "\n"; };
  auto result = eval::run_config_matrix(records, pool, configs, client, opts);
  eval::write_results(rc.out, result);
  write_provenance(rc, command, {{"manifest", fs::path(f.inputs.front()).generic_string()},
                                 {"harness", result.provenance}});
  out << eval::results_markdown(result);
  for (const auto& row : result.rows) {
    if (!row.complete()) return kExitPipeline;
  }
  return kExitOk;
}

inline int cmd_stats(const RunConfig& rc, const Flags& f, std::ostream& out) {
  if (f.inputs.size() != 1) throw UsageError("stats takes exactly one manifest");
  eval::StdEstimator est;
  if (rc.estimator == "sample") est = eval::StdEstimator::Sample;
  else if (rc.estimator == "population") est = eval::StdEstimator::Population;
  else throw UsageError("--estimator expects sample or population");
  auto records = dataset::load_manifest(f.inputs.front());
  auto stats = eval::dataset_stats(records, est);
  dataset::write_file(rc.out / "stats.csv", eval::stats_csv(stats));
  dataset::write_file(rc.out / "stats.md", eval::stats_markdown(stats));
  write_provenance(rc, "stats", {{"manifest", fs::path(f.inputs.front()).generic_string()},
                                 {"estimator", rc.estimator},
                                 {"records", records.size()}});
  out << eval::stats_markdown(stats);
  return kExitOk;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Thesis assessment pipeline: ingest, assess, evaluate, ablate, stats", "pemuta"};
  app.require_subcommand(1);
  detail::Flags f;
  detail::Options o_ingest, o_assess, o_evaluate, o_ablate, o_stats;

  auto* ingest = app.add_subcommand("ingest", "Reconstruct .layout.jsonl files into .doc.json");
  detail::add_common(ingest, f, o_ingest);
  ingest->add_option("inputs", f.inputs, "Layout files")->required();

  auto* assess_cmd = app.add_subcommand("assess", "Assess documents and write reports");
  detail::add_common(assess_cmd, f, o_assess);
  detail::add_prompt_shape(assess_cmd, f, o_assess);
  detail::add_prompting(assess_cmd, f, o_assess);
  detail::add_provider(assess_cmd, f, o_assess);
  o_assess.format = assess_cmd->add_option("--format", f.format, "json, markdown or both (default both)");
  assess_cmd->add_option("inputs", f.inputs, ".doc.json or .layout.jsonl files")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate one configuration against a manifest");
  detail::add_common(evaluate, f, o_evaluate);
  detail::add_prompt_shape(evaluate, f, o_evaluate);
  detail::add_prompting(evaluate, f, o_evaluate);
  detail::add_provider(evaluate, f, o_evaluate);
  evaluate->add_option("manifest", f.inputs, "Dataset manifest")->required();

  auto* ablate = app.add_subcommand("ablate", "Run a preset configuration matrix");
  detail::add_common(ablate, f, o_ablate);
  detail::add_prompting(ablate, f, o_ablate);
  detail::add_provider(ablate, f, o_ablate);
  o_ablate.preset = ablate->add_option("--preset", f.preset, "components, shots, all or staged (default all)");
  ablate->add_option("manifest", f.inputs, "Dataset manifest")->required();

  auto* stats = app.add_subcommand("stats", "Expert score statistics of a manifest");
  detail::add_common(stats, f, o_stats);
  o_stats.estimator = stats->add_option("--estimator", f.estimator, "sample (default) or population");
  stats->add_option("manifest", f.inputs, "Dataset manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) return detail::cmd_ingest(detail::resolve(f, o_ingest), f, out);
    if (assess_cmd->parsed()) return detail::cmd_assess(detail::resolve(f, o_assess), f, out, err);
    if (evaluate->parsed()) {
      auto rc = detail::resolve(f, o_evaluate);
      auto config = rc.prompt_config();
      return detail::run_matrix(rc, f, "evaluate", {{detail::config_label(config), config}}, out, err);
    }
    if (ablate->parsed()) {
      auto rc = detail::resolve(f, o_ablate);
      std::vector<eval::MatrixConfig> configs;
      try {
        configs = eval::preset(rc.preset, rc.profile);
      } catch (const prompting::InvalidConfig& e) {
        throw UsageError(e.what());
      }
      for (auto& mc : configs) {
        mc.config.persona_text = rc.persona;
        mc.config.context_budget_tokens = rc.budget;
        mc.config.random_seed = rc.seed;
      }
      return detail::run_matrix(rc, f, "ablate", configs, out, err);
    }
    if (stats->parsed()) return detail::cmd_stats(detail::resolve(f, o_stats), f, out);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return kExitPipeline;
  } catch (const std::exception& e) {
    err << "error: InternalError: " << e.what() << "\n";
    return kExitPipeline;
  }
}

}  // namespace pemuta::cli
