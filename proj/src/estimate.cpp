#include "olla/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "olla/error.hpp"

namespace olla {

std::optional<double> RunningMoments::variance() const {
  if (n < 2) return std::nullopt;
  return m2 / static_cast<double>(n - 1);
}

RunningMoments update_moments(RunningMoments rm, double value) {
  if (!std::isfinite(value)) throw Error(ErrorKind::parameter, "non-finite value");
  ++rm.n;
  const double delta = value - rm.mean;
  rm.mean += delta / static_cast<double>(rm.n);
  rm.m2 += delta * (value - rm.mean);
  return rm;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::parameter, "quantile probability must lie in (0, 1)");
  // Acklam's rational approximation.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

double z_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorKind::parameter, "confidence level must lie in (0, 1)");
  return normal_quantile(1.0 - (1.0 - level) / 2.0);
}

double IntervalSpec::level() const {
  validate();
  if (k && *k >= 2) return 1.0 - (1.0 - alpha) / static_cast<double>(*k);
  return alpha;
}

void IntervalSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::parameter, "alpha must lie in (0, 1)");
  if (k && *k == 0) throw Error(ErrorKind::parameter, "category count must be positive");
}

double halfwidth(double variance, std::size_t n, double level) {
  if (n == 0) throw Error(ErrorKind::undefined_interval, "interval needs at least one observation");
  if (!(variance >= 0.0)) throw Error(ErrorKind::parameter, "variance must be non-negative");
  return z_value(level) * std::sqrt(variance / static_cast<double>(n));
}

ScalarEstimate filter_estimate(const RunningMoments& moments, const IntervalSpec& spec) {
  ScalarEstimate out;
  out.n = moments.n;
  if (moments.n == 0) return out;
  out.point = moments.mean;
  if (auto v = moments.variance()) out.halfwidth = halfwidth(std::max(0.0, *v), moments.n, spec.level());
  return out;
}

double GroupEstimate::max_halfwidth() const {
  return halfwidth.empty() ? 0.0 : *std::max_element(halfwidth.begin(), halfwidth.end());
}

double finite_population_factor(std::size_t size, std::size_t sampled) {
  if (sampled > size) throw Error(ErrorKind::parameter, "more samples than stratum members");
  if (sampled == 0) return 1.0;
  if (size <= 1 || sampled == size) return 0.0;
  return static_cast<double>(size - sampled) / (static_cast<double>(sampled) * static_cast<double>(size - 1));
}

GroupEstimate group_estimate(const Stratification& strat, const IntervalSpec& spec, bool placeholders) {
  const std::size_t k = strat.K();
  if (k == 0) throw Error(ErrorKind::parameter, "no categories");
  IntervalSpec split = spec;
  split.k = k;
  GroupEstimate out;
  out.categories = strat.categories();
  out.level = split.level();
  out.point.assign(k, 0.0);
  out.variance.assign(k, 0.0);
  const double n_total = static_cast<double>(strat.n_records());

  for (const auto& s : strat.strata()) {
    if (s.size() == 0) continue;
    StratumContribution c;
    c.id = s.id;
    c.size = s.size();
    c.sampled = s.stats.m;
    c.weight = static_cast<double>(c.size) / n_total;
    c.placeholder = c.sampled == 0;
    if (c.placeholder && !placeholders) {
      throw Error(ErrorKind::coverage, "stratum " + std::to_string(s.id) + " has members but no samples");
    }
    c.fpc = finite_population_factor(c.size, std::min(c.sampled, c.size));
    for (Category j = 0; j < k; ++j) {
      const double p = c.placeholder ? 1.0 / static_cast<double>(k) : s.stats.proportion(j);
      out.point[j] += c.weight * p;
      out.variance[j] += c.weight * c.weight * c.fpc * p * (1.0 - p);
    }
    out.n_total += c.sampled;
    out.strata.push_back(c);
  }
  const double z = z_value(out.level);
  out.halfwidth.resize(k);
  for (Category j = 0; j < k; ++j) out.halfwidth[j] = z * std::sqrt(out.variance[j]);
  return out;
}

std::map<std::string, ScalarEstimate> select_estimate(const std::map<std::string, RunningMoments>& groups,
                                                      const IntervalSpec& spec) {
  std::map<std::string, ScalarEstimate> out;
  for (const auto& [key, moments] : groups) out[key] = filter_estimate(moments, spec);
  return out;
}

std::map<std::string, ScalarEstimate> select_estimate(const std::vector<std::pair<std::string, double>>& samples,
                                                      const std::map<std::string, std::size_t>& population,
                                                      const IntervalSpec& spec) {
  std::map<std::string, RunningMoments> groups;
  for (const auto& [key, size] : population) groups[key];
  for (const auto& [key, value] : samples) {
    auto it = groups.find(key);
    if (it == groups.end()) throw Error(ErrorKind::shape, "sample from unknown group '" + key + "'");
    it->second = update_moments(it->second, value);
  }
  return select_estimate(groups, spec);
}

double absolute_error(double estimate, double truth) { return std::abs(estimate - truth); }

ErrorSummary absolute_error(const std::map<std::string, double>& estimate,
                            const std::map<std::string, double>& truth) {
  if (estimate.size() != truth.size()) throw Error(ErrorKind::shape, "estimate and truth have different keys");
  ErrorSummary out;
  for (const auto& [key, value] : estimate) {
    auto it = truth.find(key);
    if (it == truth.end()) throw Error(ErrorKind::shape, "key '" + key + "' missing from the truth");
    const double e = absolute_error(value, it->second);
    out.per_key[key] = e;
    out.max = std::max(out.max, e);
  }
  return out;
}

}  // namespace olla
