#pragma once

// Agreement metrics between expert and predicted scores, and descriptive
// statistics over annotated records.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pemuta/dataset.hpp"
#include "pemuta/error.hpp"
#include "pemuta/rubric.hpp"

namespace pemuta::eval {

class EmptySeries : public Error {
 public:
  explicit EmptySeries(const std::string& target) : Error("EmptySeries", "series '" + target + "' is empty") {}
};

class TooFewPoints : public Error {
 public:
  TooFewPoints(const std::string& target, std::size_t n)
      : Error("TooFewPoints", "series '" + target + "' has " + std::to_string(n) +
                                  " point(s); correlation needs at least 2") {}
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t truth, std::size_t pred)
      : Error("LengthMismatch", "truth has " + std::to_string(truth) + " values, predictions " +
                                    std::to_string(pred)) {}
};

class EmptyDataset : public Error {
 public:
  EmptyDataset() : Error("EmptyDataset", "no records to summarize") {}
};

/// A dimension or the holistic score.
struct Target {
  std::optional<rubric::Dimension> dimension;

  static Target holistic() { return {}; }
  static Target of(rubric::Dimension d) { return {d}; }

  [[nodiscard]] std::string name() const {
    return dimension ? std::string(rubric::name(*dimension)) : "Holistic";
  }
  [[nodiscard]] std::string key() const {
    return dimension ? std::string(rubric::key(*dimension)) : "holistic";
  }
  bool operator==(const Target&) const = default;
};

/// Six dimensions in canonical order, then holistic.
inline std::vector<Target> all_targets() {
  std::vector<Target> out;
  for (auto d : rubric::kDimensions) out.push_back(Target::of(d));
  out.push_back(Target::holistic());
  return out;
}

/// Expert values (y) paired with predictions (y-hat), in record order.
class ScoreSeries {
 public:
  ScoreSeries(std::string target, std::vector<double> truth, std::vector<double> prediction)
      : target_(std::move(target)), truth_(std::move(truth)), prediction_(std::move(prediction)) {
    if (truth_.size() != prediction_.size()) throw LengthMismatch(truth_.size(), prediction_.size());
  }

  [[nodiscard]] const std::string& target() const noexcept { return target_; }
  [[nodiscard]] std::size_t size() const noexcept { return truth_.size(); }
  [[nodiscard]] const std::vector<double>& truth() const noexcept { return truth_; }
  [[nodiscard]] const std::vector<double>& prediction() const noexcept { return prediction_; }

 private:
  std::string target_;
  std::vector<double> truth_;
  std::vector<double> prediction_;
};

inline double mae(const ScoreSeries& s) {
  if (s.size() == 0) throw EmptySeries(s.target());
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s.truth()[i] - s.prediction()[i]);
  return acc / static_cast<double>(s.size());
}

inline double mse(const ScoreSeries& s) {
  if (s.size() == 0) throw EmptySeries(s.target());
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double e = s.truth()[i] - s.prediction()[i];
    acc += e * e;
  }
  return acc / static_cast<double>(s.size());
}

namespace detail {

inline double mean(std::span<const double> v) {
  double acc = 0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace detail

/// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pcc(const ScoreSeries& s) {
  if (s.size() == 0) throw EmptySeries(s.target());
  if (s.size() < 2) throw TooFewPoints(s.target(), s.size());
  if (detail::constant(s.truth()) || detail::constant(s.prediction())) return std::nullopt;
  const double my = detail::mean(s.truth());
  const double mp = detail::mean(s.prediction());
  double cov = 0, vy = 0, vp = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double dy = s.truth()[i] - my;
    double dp = s.prediction()[i] - mp;
    cov += dy * dp;
    vy += dy * dy;
    vp += dp * dp;
  }
  if (vy == 0 || vp == 0) return std::nullopt;
  return std::clamp(cov / std::sqrt(vy * vp), -1.0, 1.0);
}

enum class StdEstimator { Sample, Population };

/// Standard deviation; 0 for a single value under the sample estimator.
inline double standard_deviation(std::span<const double> v, StdEstimator estimator) {
  if (v.size() < 2) return 0.0;
  const double m = detail::mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  const double denom = estimator == StdEstimator::Sample ? static_cast<double>(v.size() - 1)
                                                         : static_cast<double>(v.size());
  return std::sqrt(ss / denom);
}

struct TargetStats {
  Target target;
  std::size_t n = 0;
  double mean = 0;
  double stddev = 0;
  double min = 0;
  double max = 0;
  /// Set when n is too small for the estimator to mean anything.
  bool degenerate = false;
};

/// Mean, std, min and max of the expert scores per target.
inline std::vector<TargetStats> dataset_stats(std::span<const dataset::DatasetRecord> records,
                                              StdEstimator estimator = StdEstimator::Sample) {
  if (records.empty()) throw EmptyDataset();
  for (const auto& r : records) r.require_complete();
  std::vector<TargetStats> out;
  for (const auto& t : all_targets()) {
    std::vector<double> v;
    for (const auto& r : records) {
      v.push_back(t.dimension ? r.score(*t.dimension)->value() : r.holistic->value());
    }
    TargetStats s;
    s.target = t;
    s.n = v.size();
    s.mean = detail::mean(v);
    s.stddev = standard_deviation(v, estimator);
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    s.degenerate = estimator == StdEstimator::Sample ? v.size() < 2 : v.empty();
    out.push_back(s);
  }
  return out;
}

/// Metrics of one target over one configuration.
struct TargetResult {
  Target target;
  std::size_t n = 0;
  std::optional<double> mean;
  std::optional<double> stddev;
  std::optional<double> mae;
  std::optional<double> mse;
  std::optional<double> pcc;
};

/// Evaluates a series; an empty series yields n = 0 and no metrics.
inline TargetResult evaluate_series(const Target& target, const ScoreSeries& s) {
  TargetResult r;
  r.target = target;
  r.n = s.size();
  if (s.size() == 0) return r;
  r.mean = detail::mean(s.prediction());
  r.stddev = standard_deviation(s.prediction(), StdEstimator::Sample);
  r.mae = mae(s);
  r.mse = mse(s);
  if (s.size() >= 2) r.pcc = pcc(s);
  // MAE^2 <= MSE by Jensen; a violation means the arithmetic is broken.
  if (*r.mae * *r.mae > *r.mse * (1 + 1e-12) + 1e-15) {
    throw Error("InternalError", "MAE^2 exceeds MSE for " + target.name());
  }
  return r;
}

}  // namespace pemuta::eval
