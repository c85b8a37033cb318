#pragma once

// The six assessment dimensions, the 0-10 score scale and weight profiles.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pemuta/detail/text.hpp"
#include "pemuta/error.hpp"

namespace pemuta::rubric {

enum class Dimension { Structure, Logic, Originality, Writing, Proficiency, Rigor };

inline constexpr std::size_t kDimensionCount = 6;

inline constexpr std::array<Dimension, kDimensionCount> kDimensions = {
    Dimension::Structure, Dimension::Logic,       Dimension::Originality,
    Dimension::Writing,   Dimension::Proficiency, Dimension::Rigor};

inline constexpr std::size_t index_of(Dimension d) { return static_cast<std::size_t>(d); }

/// Display name ("Structure").
inline std::string_view name(Dimension d) {
  static constexpr std::array<std::string_view, kDimensionCount> kNames = {
      "Structure", "Logic", "Originality", "Writing", "Proficiency", "Rigor"};
  return kNames[index_of(d)];
}

/// Lower-case key used in replies, reports and config files ("structure").
inline std::string_view key(Dimension d) {
  static constexpr std::array<std::string_view, kDimensionCount> kKeys = {
      "structure", "logic", "originality", "writing", "proficiency", "rigor"};
  return kKeys[index_of(d)];
}

/// Case-insensitive lookup by name.
inline std::optional<Dimension> parse_dimension(std::string_view s) {
  auto lowered = detail::to_lower_ascii(detail::trim(s));
  for (auto d : kDimensions) {
    if (key(d) == lowered) return d;
  }
  return std::nullopt;
}

/// Aspects a reviewer inspects for the dimension.
inline std::string_view aspects(Dimension d) {
  switch (d) {
    case Dimension::Structure:
      return "Organization of chapters; Coherence across sections; Smooth transitions.";
    case Dimension::Logic:
      return "Consistency among research questions, methodology, and conclusions; Clarity of "
             "reasoning and argument.";
    case Dimension::Originality:
      return "Original perspectives; Novel research questions; Theoretical or methodological "
             "innovation.";
    case Dimension::Writing:
      return "Clarity; Grammatical accuracy; Academic tone; Adherence to disciplinary "
             "conventions.";
    case Dimension::Proficiency:
      return "Application of course knowledge; Use of technical terminology; Problem-solving "
             "skills with disciplinary understanding; Use of field-specific tools.";
    case Dimension::Rigor:
      return "Source reliability; Citation accuracy and format; Compliance with academic ethics.";
  }
  return {};
}

/// One-sentence statement of what the dimension scores.
inline std::string_view definition(Dimension d) {
  switch (d) {
    case Dimension::Structure:
      return "How well the thesis is organized into chapters and sections that build on each "
             "other and follow academic conventions.";
    case Dimension::Logic:
      return "Whether the research questions, methods, evidence and conclusions line up and the "
             "argument can be followed step by step.";
    case Dimension::Originality:
      return "The novelty of the questions asked, the perspectives taken and the solutions "
             "proposed.";
    case Dimension::Writing:
      return "The clarity, correctness and register of the language against the conventions of "
             "the discipline.";
    case Dimension::Proficiency:
      return "The command of disciplinary knowledge, terminology, methods and tools shown in "
             "solving the thesis problem.";
    case Dimension::Rigor:
      return "Adherence to scholarly standards: reliable sources, accurate and consistently "
             "formatted citations, and ethical conduct.";
  }
  return {};
}

class ScoreOutOfRange : public Error {
 public:
  ScoreOutOfRange(const std::string& target, double value)
      : Error("ScoreOutOfRange", target + " score " + detail::format_number(value) +
                                     " is outside [0, 10]"),
        target_(target),
        value_(value) {}
  [[nodiscard]] const std::string& target() const noexcept { return target_; }
  [[nodiscard]] double value() const noexcept { return value_; }

 private:
  std::string target_;
  double value_;
};

inline constexpr double kMinScore = 0.0;
inline constexpr double kMaxScore = 10.0;

/// A value on the closed [0, 10] scale.
class Score {
 public:
  constexpr Score() = default;
  explicit Score(double value, std::string_view target = "score") : value_(value) {
    if (!(value >= kMinScore && value <= kMaxScore)) throw ScoreOutOfRange(std::string(target), value);
  }
  [[nodiscard]] constexpr double value() const noexcept { return value_; }
  bool operator==(const Score&) const = default;
  auto operator<=>(const Score&) const = default;

 private:
  double value_ = 0.0;
};

/// A (score, justification) pair for one dimension.
struct DimensionAssessment {
  Dimension dimension = Dimension::Structure;
  Score score;
  std::string justification;

  bool operator==(const DimensionAssessment&) const = default;
};

class WeightOutOfRange : public Error {
 public:
  WeightOutOfRange(Dimension d, double w)
      : Error("WeightOutOfRange", std::string(rubric::name(d)) + " weight " + detail::format_number(w) +
                                      " is outside [0, 1]") {}
};

class WeightsDoNotSumToOne : public Error {
 public:
  explicit WeightsDoNotSumToOne(double sum)
      : Error("WeightsDoNotSumToOne", "weights sum to " + detail::format_number(sum)) {}
};

class MissingDimension : public Error {
 public:
  explicit MissingDimension(std::string_view dim)
      : Error("MissingDimension", "missing dimension " + std::string(dim)), dimension_(dim) {}
  [[nodiscard]] const std::string& dimension() const noexcept { return dimension_; }

 private:
  std::string dimension_;
};

class UnknownDimension : public Error {
 public:
  explicit UnknownDimension(std::string_view what)
      : Error("UnknownDimension", "unknown dimension '" + std::string(what) + "'") {}
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Aggregation weights, one per dimension. Every constructed profile has
/// weights in [0, 1] summing to 1 within 1e-9.
class WeightProfile {
 public:
  explicit WeightProfile(const std::array<double, kDimensionCount>& weights) : weights_(weights) {
    double sum = 0;
    for (auto d : kDimensions) {
      double w = weights_[index_of(d)];
      if (!(w >= 0.0 && w <= 1.0)) throw WeightOutOfRange(d, w);
      sum += w;
    }
    if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) throw WeightsDoNotSumToOne(sum);
  }

  [[nodiscard]] double weight(Dimension d) const { return weights_[index_of(d)]; }
  [[nodiscard]] const std::array<double, kDimensionCount>& weights() const { return weights_; }
  bool operator==(const WeightProfile&) const = default;

 private:
  std::array<double, kDimensionCount> weights_;
};

inline WeightProfile uniform_profile() {
  std::array<double, kDimensionCount> w{};
  w.fill(1.0 / 6.0);
  return WeightProfile(w);
}

/// Structure, Logic, Originality and Writing weighted 0.2 as core
/// indicators; Proficiency and Rigor 0.1 as supporting ones.
inline WeightProfile core_weighted_profile() {
  return WeightProfile({0.2, 0.2, 0.2, 0.2, 0.1, 0.1});
}

inline WeightProfile custom_profile(const std::map<Dimension, double>& weights) {
  std::array<double, kDimensionCount> w{};
  for (auto d : kDimensions) {
    auto it = weights.find(d);
    if (it == weights.end()) throw MissingDimension(name(d));
    w[index_of(d)] = it->second;
  }
  return WeightProfile(w);
}

/// `{"structure": .., "logic": .., ...}`
inline nlohmann::json to_json(const WeightProfile& p) {
  nlohmann::json j = nlohmann::json::object();
  for (auto d : kDimensions) j[std::string(key(d))] = p.weight(d);
  return j;
}

class InvalidWeights : public Error {
 public:
  explicit InvalidWeights(const std::string& what) : Error("InvalidWeights", what) {}
};

inline WeightProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidWeights("weight profile must be an object");
  std::map<Dimension, double> weights;
  for (const auto& [k, v] : j.items()) {
    auto d = parse_dimension(k);
    if (!d) throw UnknownDimension(k);
    if (!v.is_number()) throw InvalidWeights("weight for " + k + " must be a number");
    weights[*d] = v.get<double>();
  }
  return custom_profile(weights);
}

}  // namespace pemuta::rubric
