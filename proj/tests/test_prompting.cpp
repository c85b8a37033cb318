#include <gtest/gtest.h>

#include <set>

#include "pemuta/prompting.hpp"
#include "support.hpp"

using namespace pemuta;
using namespace pemuta::prompting;
using rubric::Dimension;

namespace {

const ThesisText kThesis{"demo-thesis", "A short thesis about campus shuttles.\nIt has two lines."};

dataset::DatasetRecord record(const std::string& id, double s, double holistic) {
  dataset::DatasetRecord r;
  r.id = id;
  for (auto d : rubric::kDimensions) r.dimension_scores[rubric::index_of(d)] = rubric::Score(s);
  r.holistic = rubric::Score(holistic);
  return r;
}

std::vector<dataset::DatasetRecord> pool3() {
  return {record("pa", 8.0, 8.0), record("pb", 7.0, 7.0), record("pc", 9.0, 9.0)};
}

std::vector<Exemplar> exemplars(int k) {
  auto pool = pool3();
  return select_exemplars(pool, static_cast<std::size_t>(k), 1);
}

const std::string& user_text(const PromptBundle& b) {
  for (const auto& m : b.messages) {
    if (m.role == Role::User) return m.content;
  }
  throw std::runtime_error("no user message");
}

std::size_t user_messages(const PromptBundle& b) {
  std::size_t n = 0;
  for (const auto& m : b.messages) n += m.role == Role::User;
  return n;
}

std::size_t count(std::string_view hay, std::string_view needle) {
  return pemuta::detail::count_occurrences(hay, needle);
}

}  // namespace

TEST(RolePreamble, DefaultPersona) {
  auto m = role_preamble(PromptConfig{});
  EXPECT_EQ(m.role, Role::System);
  EXPECT_EQ(m.content,
            "You are a university professor responsible for evaluating students' submitted "
            "undergraduate thesis.");
}

TEST(RolePreamble, CustomPersonaVerbatim) {
  PromptConfig c;
  c.persona_text = "  Du bist Professorin.\nBewerte streng. ";
  EXPECT_EQ(role_preamble(c).content, c.persona_text);
  auto b = build_composite_prompt(kThesis, [&] {
    auto cc = c;
    cc.shot_count = 0;
    return cc;
  }(), {});
  ASSERT_TRUE(b.has_system_message());
  EXPECT_EQ(b.messages[0].content, c.persona_text);
}

TEST(RolePreamble, RoleOffMeansNoSystemMessage) {
  auto b = build_composite_prompt(kThesis, make_prompt_config(Mode::Composite, false, 0), {});
  EXPECT_FALSE(b.has_system_message());
  ASSERT_EQ(b.messages.size(), 1u);
}

TEST(Config, Invariants) {
  EXPECT_THROW(make_prompt_config(Mode::Standard, false, 2), InvalidConfig);
  EXPECT_THROW(make_prompt_config(Mode::Composite, true, -1), InvalidConfig);
  PromptConfig c;
  c.persona_text = "   ";
  EXPECT_THROW(c.validate(), InvalidConfig);
  c.use_role_play = false;
  EXPECT_NO_THROW(c.validate());
  c.context_budget_tokens = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(FormatExemplar, AllEights) {
  auto ex = format_exemplar(record("r", 8.0, 8.0));
  EXPECT_EQ(count(ex.formatted_text, ": 8.0\n"), 7u);
  for (auto d : rubric::kDimensions) {
    EXPECT_NE(ex.formatted_text.find(std::string(rubric::name(d)) + ": 8.0\n"), std::string::npos);
  }
  EXPECT_EQ(ex.formatted_text.substr(ex.formatted_text.size() - 14), "Holistic: 8.0\n");
}

TEST(FormatExemplar, MissingRigor) {
  auto r = record("r", 8.0, 8.0);
  r.dimension_scores[rubric::index_of(Dimension::Rigor)].reset();
  try {
    format_exemplar(r);
    FAIL();
  } catch (const dataset::MissingScore& e) {
    EXPECT_EQ(e.name(), "MissingScore");
    EXPECT_NE(std::string(e.what()).find("Rigor"), std::string::npos);
  }
}

TEST(FormatExemplar, StoredHolisticIsRenderedVerbatim) {
  dataset::DatasetRecord r;
  r.id = "means";
  const double means[] = {8.20, 8.31, 8.36, 8.15, 9.05, 8.83};
  for (auto d : rubric::kDimensions) r.dimension_scores[rubric::index_of(d)] = rubric::Score(means[rubric::index_of(d)]);
  r.holistic = rubric::Score(8.39);  // not any weighted sum of the six
  auto ex = format_exemplar(r);
  EXPECT_NE(ex.formatted_text.find("Holistic: 8.39\n"), std::string::npos);
  EXPECT_NE(ex.formatted_text.find("Logic: 8.31\n"), std::string::npos);
  EXPECT_EQ(ex.holistic.value(), 8.39);
  // Score lines only.
  EXPECT_EQ(count(ex.formatted_text, "\n"), 7u);
  EXPECT_EQ(ex.formatted_text.find("ustification"), std::string::npos);
}

TEST(SelectExemplars, ExclusionForcesTheOtherTwo) {
  auto pool = pool3();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto ex = select_exemplars(pool, 2, seed, "pb");
    std::set<std::string> ids{ex[0].source_id, ex[1].source_id};
    EXPECT_EQ(ids, (std::set<std::string>{"pa", "pc"}));
  }
}

TEST(SelectExemplars, ZeroIsEmpty) {
  auto pool = pool3();
  EXPECT_TRUE(select_exemplars(pool, 0, 123).empty());
  std::vector<dataset::DatasetRecord> empty;
  EXPECT_TRUE(select_exemplars(empty, 0, 1).empty());
}

TEST(SelectExemplars, FixedSeedFixedPair) {
  auto pool = pool3();
  const std::set<std::set<std::string>> all_pairs = {{"pa", "pb"}, {"pa", "pc"}, {"pb", "pc"}};
  std::set<std::set<std::string>> reached;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto first = select_exemplars(pool, 2, seed);
    auto again = select_exemplars(pool, 2, seed);
    ASSERT_EQ(first.size(), 2u);
    EXPECT_EQ(first[0].source_id, again[0].source_id);
    EXPECT_EQ(first[1].source_id, again[1].source_id);
    std::set<std::string> pair{first[0].source_id, first[1].source_id};
    EXPECT_EQ(pair.size(), 2u);
    EXPECT_TRUE(all_pairs.count(pair));
    reached.insert(pair);
  }
  // Over many seeds every pair is reachable.
  EXPECT_EQ(reached, all_pairs);
}

TEST(SelectExemplars, PoolTooSmall) {
  auto pool = pool3();
  EXPECT_THROW(select_exemplars(pool, 3, 0, "pa"), PoolTooSmall);
  EXPECT_THROW(select_exemplars(pool, 4, 0), PoolTooSmall);
}

TEST(SelectExemplars, PerThesisSeed) {
  EXPECT_EQ(exemplar_seed(5, "t01"), exemplar_seed(5, "t01"));
  EXPECT_NE(exemplar_seed(5, "t01"), exemplar_seed(5, "t02"));
  EXPECT_NE(exemplar_seed(5, "t01"), exemplar_seed(6, "t01"));
}

TEST(CompositePrompt, ZeroShotRoleOff) {
  auto b = build_composite_prompt(kThesis, make_prompt_config(Mode::Composite, false, 0), {});
  EXPECT_FALSE(b.has_system_message());
  ASSERT_EQ(b.messages.size(), 1u);
  EXPECT_EQ(count(user_text(b), kExemplarMarker), 0u);
  EXPECT_EQ(b.mode, Mode::Composite);
}

TEST(CompositePrompt, TwoShotRoleOnOrdering) {
  auto ex = exemplars(2);
  auto b = build_composite_prompt(kThesis, make_prompt_config(Mode::Composite, true, 2), ex);
  ASSERT_EQ(b.messages.size(), 2u);
  EXPECT_EQ(b.messages[0].role, Role::System);
  EXPECT_EQ(b.messages[1].role, Role::User);
  const auto& u = user_text(b);
  EXPECT_EQ(count(u, kExemplarMarker), 2u);

  // Instructions, then exemplars, then the thesis.
  auto instructions = u.find("Aspects: ");
  auto first_exemplar = u.find(kExemplarMarker);
  auto thesis = u.find(kThesisOpen);
  ASSERT_NE(instructions, std::string::npos);
  EXPECT_LT(instructions, first_exemplar);
  EXPECT_LT(u.rfind(kExemplarMarker), thesis);
  EXPECT_NE(u.find(kThesis.text), std::string::npos);
  EXPECT_EQ(count(u, kThesis.text), 1u);
  for (auto d : rubric::kDimensions) {
    EXPECT_NE(u.find(rubric::aspects(d)), std::string::npos) << rubric::name(d);
    EXPECT_NE(u.find("\"" + std::string(rubric::key(d)) + "\""), std::string::npos);
  }
  EXPECT_NE(u.find("```json"), std::string::npos);
  EXPECT_NE(u.find(std::string(kThesisIdMarker) + kThesis.id), std::string::npos);
}

TEST(CompositePrompt, ShotCountMustMatchExemplars) {
  auto ex = exemplars(1);
  EXPECT_THROW(build_composite_prompt(kThesis, make_prompt_config(Mode::Composite, true, 2), ex), InvalidConfig);
}

TEST(CompositePrompt, OversizedDocument) {
  auto c = make_prompt_config(Mode::Composite, false, 0);
  c.context_budget_tokens = 1000;
  ThesisText big{"big", std::string(8000, 'x')};
  try {
    build_composite_prompt(big, c, {});
    FAIL();
  } catch (const DocumentTooLarge& e) {
    EXPECT_EQ(e.name(), "DocumentTooLarge");
    EXPECT_GT(e.estimated_tokens(), 1000u);
  }
  EXPECT_THROW(build_stage_prompts(big, [&] {
                 auto s = c;
                 s.mode = Mode::Staged;
                 return s;
               }(), {}),
               DocumentTooLarge);
  EXPECT_THROW(build_standard_prompt(big, [&] {
                 auto s = c;
                 s.mode = Mode::Standard;
                 return s;
               }()),
               DocumentTooLarge);
}

TEST(CompositePrompt, HashStable) {
  auto ex = exemplars(2);
  auto c = make_prompt_config(Mode::Composite, true, 2);
  auto a = build_composite_prompt(kThesis, c, ex);
  auto b = build_composite_prompt(kThesis, c, ex);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.provenance_hash.size(), 16u);

  auto other_pool = pool3();
  auto ex2 = select_exemplars(other_pool, 2, 1, ex[0].source_id);
  EXPECT_NE(build_composite_prompt(kThesis, c, ex2).provenance_hash, a.provenance_hash);
  EXPECT_NE(build_composite_prompt({"other-id", kThesis.text}, c, ex).provenance_hash, a.provenance_hash);
  auto c2 = c;
  c2.random_seed = 9;
  EXPECT_NE(build_composite_prompt(kThesis, c2, ex).provenance_hash, a.provenance_hash);
}

TEST(StagePrompts, SixBundlesOneDimensionEach) {
  auto ex = exemplars(2);
  auto stages = build_stage_prompts(kThesis, make_prompt_config(Mode::Staged, false, 2), ex);
  for (auto d : rubric::kDimensions) {
    const auto& b = stages.dimension_bundles[rubric::index_of(d)];
    const auto& u = user_text(b);
    EXPECT_EQ(b.mode, Mode::Staged);
    EXPECT_FALSE(b.has_system_message());
    EXPECT_EQ(count(u, kStageMarker), 1u);
    EXPECT_NE(u.find(std::string(kStageMarker) + std::string(rubric::name(d)) + "\n"), std::string::npos);
    for (auto other : rubric::kDimensions) {
      if (other == d) continue;
      EXPECT_EQ(u.find(rubric::name(other)), std::string::npos)
          << rubric::name(d) << " bundle mentions " << rubric::name(other);
    }
    EXPECT_NE(u.find(rubric::aspects(d)), std::string::npos);
    EXPECT_EQ(count(u, kExemplarMarker), 2u);
    EXPECT_EQ(count(u, kThesis.text), 1u);
  }
}

TEST(StagePrompts, SynthesisCarriesAllTuples) {
  auto stages = build_stage_prompts(kThesis, make_prompt_config(Mode::Staged, true, 0), {});
  std::vector<rubric::DimensionAssessment> tuples;
  double v = 6.5;
  for (auto d : rubric::kDimensions) {
    tuples.push_back({d, rubric::Score(v), "because of evidence " + std::string(rubric::key(d))});
    v += 0.5;
  }
  auto b = stages.synthesis.build(tuples);
  const auto& u = user_text(b);
  EXPECT_TRUE(b.has_system_message());
  EXPECT_NE(u.find(kSynthesisMarker), std::string::npos);
  for (const auto& t : tuples) {
    EXPECT_NE(u.find(std::string(rubric::name(t.dimension)) + " (score " +
                     pemuta::detail::format_number(t.score.value()) + "): " + t.justification),
              std::string::npos);
  }
  EXPECT_NE(u.find("\"feedback\""), std::string::npos);
  EXPECT_EQ(u.find("\"holistic\""), std::string::npos);
}

TEST(StagePrompts, RoleOnAllSevenBundlesHavePreamble) {
  auto stages = build_stage_prompts(kThesis, make_prompt_config(Mode::Staged, true, 0), {});
  for (const auto& b : stages.dimension_bundles) {
    ASSERT_TRUE(b.has_system_message());
    EXPECT_EQ(b.messages[0].content, kDefaultPersona);
  }
  std::vector<rubric::DimensionAssessment> tuples;
  for (auto d : rubric::kDimensions) tuples.push_back({d, rubric::Score(7), "ok"});
  EXPECT_TRUE(stages.synthesis.build(tuples).has_system_message());
}

TEST(StandardPrompt, ContainsInstructionVerbatim) {
  auto b = build_standard_prompt(kThesis);
  ASSERT_EQ(b.messages.size(), 1u);
  const auto& u = user_text(b);
  EXPECT_NE(u.find("Holistically assess the given thesis on a 1–10 scale"), std::string::npos);
  EXPECT_NE(u.find(kThesis.text), std::string::npos);
  for (auto d : rubric::kDimensions) EXPECT_EQ(u.find(rubric::name(d)), std::string::npos);
  EXPECT_EQ(count(u, kExemplarMarker), 0u);
}

TEST(StandardPrompt, EmptyDocumentStillValid) {
  auto b = build_standard_prompt(ThesisText{"empty", ""});
  EXPECT_EQ(b.messages.size(), 1u);
  EXPECT_NE(user_text(b).find(kStandardInstruction), std::string::npos);
}

TEST(StandardPrompt, BuilderRejectsOtherModes) {
  EXPECT_THROW(build_standard_prompt(kThesis, make_prompt_config(Mode::Composite, false, 0)), InvalidConfig);
  EXPECT_THROW(build_composite_prompt(kThesis, make_prompt_config(Mode::Staged, false, 0), {}), InvalidConfig);
  EXPECT_THROW(build_stage_prompts(kThesis, make_prompt_config(Mode::Composite, false, 0), {}), InvalidConfig);
}

/// Components present in every bundle match the config toggles.
TEST(PromptStructure, AllConfigCombinations) {
  int valid = 0, rejected = 0;
  for (auto mode : {Mode::Composite, Mode::Staged, Mode::Standard}) {
    for (bool role : {false, true}) {
      for (int shots : {0, 2}) {
        SCOPED_TRACE(std::string(to_string(mode)) + (role ? " role" : "") + " " + std::to_string(shots));
        PromptConfig c;
        try {
          c = make_prompt_config(mode, role, shots);
        } catch (const InvalidConfig&) {
          EXPECT_EQ(mode, Mode::Standard);
          EXPECT_EQ(shots, 2);
          ++rejected;
          continue;
        }
        ++valid;
        auto ex = exemplars(shots);
        std::vector<PromptBundle> bundles;
        if (mode == Mode::Composite) bundles.push_back(build_composite_prompt(kThesis, c, ex));
        if (mode == Mode::Staged) {
          auto s = build_stage_prompts(kThesis, c, ex);
          bundles.assign(s.dimension_bundles.begin(), s.dimension_bundles.end());
        }
        if (mode == Mode::Standard) bundles.push_back(build_standard_prompt(kThesis, c));
        for (const auto& b : bundles) {
          EXPECT_EQ(b.has_system_message(), role);
          EXPECT_EQ(user_messages(b), 1u);
          const auto& u = user_text(b);
          EXPECT_EQ(count(u, kExemplarMarker), static_cast<std::size_t>(shots));
          EXPECT_EQ(count(u, kThesis.text), 1u);
          const bool has_instructions = u.find("Aspects: ") != std::string::npos;
          EXPECT_EQ(has_instructions, mode != Mode::Standard);
        }
      }
    }
  }
  EXPECT_EQ(valid, 10);
  EXPECT_EQ(rejected, 2);
}

TEST(Templates, ShippedFilesEqualDefaults) {
  auto loaded = PromptTemplates::load(test::source("templates"));
  PromptTemplates defaults;
  for (const auto& slot : PromptTemplates::slots()) {
    EXPECT_EQ(loaded.*(slot.field), defaults.*(slot.field)) << slot.file;
  }
  EXPECT_EQ(loaded.hash(), defaults.hash());
}

TEST(Templates, OverridesAndValidation) {
  test::TempDir dir;
  dataset::write_file(dir / "standard.txt", "Score it.\n{{reply_format}}\n{{thesis_id_line}}\n{{document}}\n");
  auto t = PromptTemplates::load(dir.path());
  EXPECT_EQ(t.standard, "Score it.\n{{reply_format}}\n{{thesis_id_line}}\n{{document}}\n");
  EXPECT_EQ(t.composite, PromptTemplates{}.composite);
  EXPECT_NE(t.hash(), PromptTemplates{}.hash());

  auto b = build_standard_prompt(kThesis, make_prompt_config(Mode::Standard, false, 0), t);
  EXPECT_EQ(user_text(b).rfind("Score it.", 0), 0u);

  dataset::write_file(dir / "composite.txt", "no placeholders here");
  EXPECT_THROW(PromptTemplates::load(dir.path()), InvalidTemplate);
  EXPECT_THROW(PromptTemplates::load(dir / "missing"), InvalidTemplate);
}

TEST(Tokens, FourCharsPerToken) {
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("abcd"), 1u);
  EXPECT_EQ(estimate_tokens("abcde"), 2u);
  EXPECT_EQ(estimate_tokens("数据数据"), 1u);
}
