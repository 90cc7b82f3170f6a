#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "olla/stratify.hpp"

namespace olla {

/// Welford accumulator.
struct RunningMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  /// Sample variance M2/(n-1); nullopt below two observations.
  std::optional<double> variance() const;

  bool operator==(const RunningMoments&) const = default;
};

RunningMoments update_moments(RunningMoments rm, double value);

/// Standard normal inverse CDF, accurate to about 1e-9 after one Halley step.
double normal_quantile(double p);

/// Two-sided critical value for confidence `level`: Phi^-1(1 - (1 - level)/2).
double z_value(double level);

struct IntervalSpec {
  double alpha = 0.95;           // confidence level
  std::optional<std::size_t> k;  // categories sharing the error budget (Bonferroni)

  /// Per-interval confidence: alpha, or 1 - (1 - alpha)/K with K categories.
  double level() const;
  void validate() const;
};

/// z_p sqrt(V/n) with p the two-sided confidence `level`.
double halfwidth(double variance, std::size_t n, double level);

/// A point estimate with an optional interval; the interval is withheld while
/// warming up (fewer than two observations).
struct ScalarEstimate {
  std::optional<double> point;
  std::optional<double> halfwidth;
  std::size_t n = 0;

  bool warming_up() const { return !halfwidth.has_value(); }
};

/// Mean of the valid values with the plain interval at level alpha.
ScalarEstimate filter_estimate(const RunningMoments& moments, const IntervalSpec& spec);

struct StratumContribution {
  StratumId id = 0;
  std::size_t size = 0;     // N_h
  std::size_t sampled = 0;  // m_h
  double weight = 0.0;      // N_h / N
  double fpc = 0.0;         // f_h
  bool placeholder = false;
};

struct GroupEstimate {
  std::vector<std::string> categories;
  std::vector<double> point;      // p_k
  std::vector<double> variance;   // V_k
  std::vector<double> halfwidth;  // z sqrt(V_k)
  std::size_t n_total = 0;
  double level = 0.0;
  std::vector<StratumContribution> strata;

  double max_halfwidth() const;
};

/// (N_h - m) / (m (N_h - 1)); 0 for a singleton or fully sampled stratum, 1 when m = 0.
double finite_population_factor(std::size_t size, std::size_t sampled);

/// Stratified proportion estimate over the recorded labels of `strat`. Strata
/// without samples contribute p = 1/K and f = 1 when `placeholders` is set and
/// raise a coverage error otherwise. The confidence level is split across K.
GroupEstimate group_estimate(const Stratification& strat, const IntervalSpec& spec, bool placeholders = true);

/// Per-group means with plain intervals at level alpha (no Bonferroni).
std::map<std::string, ScalarEstimate> select_estimate(const std::map<std::string, RunningMoments>& groups,
                                                      const IntervalSpec& spec);

/// Builds the per-group moments from (group, value) samples first. Groups in
/// `population` without samples appear with no point; a sample from a group
/// missing from `population` is a shape error.
std::map<std::string, ScalarEstimate> select_estimate(const std::vector<std::pair<std::string, double>>& samples,
                                                      const std::map<std::string, std::size_t>& population,
                                                      const IntervalSpec& spec);

struct ErrorSummary {
  double max = 0.0;
  std::map<std::string, double> per_key;
};

double absolute_error(double estimate, double truth);

/// Component-wise |estimate - truth|; key sets must match (shape error otherwise).
ErrorSummary absolute_error(const std::map<std::string, double>& estimate, const std::map<std::string, double>& truth);

}  // namespace olla
