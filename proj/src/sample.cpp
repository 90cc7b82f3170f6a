#include "olla/sample.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "olla/error.hpp"
#include "olla/rng.hpp"

namespace olla {

std::size_t Allocation::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t Allocation::count(StratumId id) const {
  for (std::size_t i = 0; i < strata.size(); ++i) {
    if (strata[i] == id) return counts[i];
  }
  return 0;
}

namespace {

// Largest remainder over the slots in `active`; a slot whose quota reaches its
// cap is pinned there and the rest re-apportioned.
void apportion_weighted(std::span<const double> weights, std::size_t& n, std::span<const std::size_t> caps,
                        std::vector<std::size_t>& out) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0 && out[i] < caps[i]) active.push_back(i);
  }
  while (n > 0 && !active.empty()) {
    double total = 0.0;
    for (auto i : active) total += weights[i];
    std::vector<std::size_t> pinned;
    for (auto i : active) {
      const double quota = static_cast<double>(n) * weights[i] / total;
      if (quota >= static_cast<double>(caps[i] - out[i])) pinned.push_back(i);
    }
    if (!pinned.empty()) {
      for (auto i : pinned) {
        const std::size_t add = std::min(n, caps[i] - out[i]);
        n -= add;
        out[i] += add;
      }
      std::erase_if(active, [&](std::size_t i) { return out[i] == caps[i]; });
      if (std::none_of(pinned.begin(), pinned.end(), [&](std::size_t i) { return out[i] == caps[i]; })) break;
      continue;
    }
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t placed = 0;
    for (auto i : active) {
      const double quota = static_cast<double>(n) * weights[i] / total;
      const auto whole = static_cast<std::size_t>(std::floor(quota));
      out[i] += whole;
      placed += whole;
      remainders.emplace_back(quota - static_cast<double>(whole), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t left = n - placed;
    for (std::size_t j = 0; j < remainders.size() && left > 0; ++j, --left) ++out[remainders[j].second];
    n = 0;
  }
}

}  // namespace

std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t n,
                                   std::span<const std::size_t> caps) {
  if (weights.size() != caps.size()) throw Error(ErrorKind::parameter, "weights and caps differ in length");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::parameter, "weights must be finite and non-negative");
  }
  std::vector<std::size_t> out(weights.size(), 0);
  apportion_weighted(weights, n, caps, out);
  if (n > 0) {
    std::vector<double> spare(weights.size());
    for (std::size_t i = 0; i < spare.size(); ++i) spare[i] = static_cast<double>(caps[i] - out[i]);
    apportion_weighted(spare, n, caps, out);
  }
  return out;
}

namespace {

Allocation empty_allocation(const Stratification& strat, std::size_t n, std::size_t iteration) {
  if (n == 0) throw Error(ErrorKind::parameter, "sample size must be at least 1");
  if (strat.total_remaining() == 0) throw Error(ErrorKind::exhaustion, "corpus exhausted");
  Allocation a;
  a.iteration = iteration;
  for (const auto& s : strat.strata()) a.strata.push_back(s.id);
  a.counts.assign(a.strata.size(), 0);
  return a;
}

std::vector<std::size_t> remaining_caps(const Stratification& strat) {
  std::vector<std::size_t> caps;
  for (const auto& s : strat.strata()) caps.push_back(strat.remaining(s.id));
  return caps;
}

}  // namespace

Allocation proportional_allocation(const Stratification& strat, std::size_t n, std::size_t iteration) {
  Allocation a = empty_allocation(strat, n, iteration);
  std::vector<double> weights;
  for (const auto& s : strat.strata()) weights.push_back(static_cast<double>(s.size()));
  a.counts = apportion(weights, n, remaining_caps(strat));
  return a;
}

Allocation neyman_allocation(const Stratification& strat, std::size_t n, std::size_t iteration) {
  Allocation a = empty_allocation(strat, n, iteration);
  const auto caps = remaining_caps(strat);
  const double placeholder = strat.K() > 0 ? 1.0 - 1.0 / static_cast<double>(strat.K()) : 0.0;
  std::vector<double> weights;
  bool any_variance = false;
  for (const auto& s : strat.strata()) {
    const double v = s.stats.m == 0 ? placeholder : s.stats.heterogeneity;
    weights.push_back(static_cast<double>(s.size()) * std::sqrt(v));
    any_variance = any_variance || (v > 0.0 && strat.remaining(s.id) > 0);
  }
  if (!any_variance) return proportional_allocation(strat, n, iteration);

  std::vector<std::size_t> floor(weights.size(), 0);
  std::size_t left = n;
  for (std::size_t i = 0; i < weights.size() && left > 0; ++i) {
    if (weights[i] == 0.0 && caps[i] > 0) {
      floor[i] = 1;
      --left;
    }
  }
  std::vector<std::size_t> rest_caps(caps.size());
  for (std::size_t i = 0; i < caps.size(); ++i) rest_caps[i] = caps[i] - floor[i];
  const auto rest = apportion(weights, left, rest_caps);
  for (std::size_t i = 0; i < a.counts.size(); ++i) a.counts[i] = floor[i] + rest[i];
  return a;
}

std::vector<Draw> draw(const Stratification& strat, const Allocation& alloc, std::uint64_t seed) {
  if (alloc.strata.size() != alloc.counts.size()) throw Error(ErrorKind::parameter, "malformed allocation");
  std::vector<Draw> out;
  for (std::size_t i = 0; i < alloc.strata.size(); ++i) {
    const std::size_t want = alloc.counts[i];
    if (want == 0) continue;
    const StratumId id = alloc.strata[i];
    auto pool = strat.unsampled(id);
    if (want > pool.size()) {
      throw Error(ErrorKind::exhaustion, "stratum " + std::to_string(id) + " has " + std::to_string(pool.size()) +
                                             " unsampled members, " + std::to_string(want) + " requested");
    }
    std::mt19937_64 rng(derive_seed(seed, id));
    for (std::size_t j = 0; j < want; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
      std::swap(pool[j], pool[pick(rng)]);
      out.push_back({id, pool[j]});
    }
  }
  return out;
}

std::vector<StratumId> FilterPriorities::order() const {
  std::vector<StratumId> out(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i) out[rank[i] - 1] = strata[i];
  return out;
}

FilterPriorities probe_valid_rates(Stratification& strat, std::size_t m, const FilterLabelFn& label,
                                   std::uint64_t seed) {
  const auto& cats = strat.categories();
  if (cats != std::vector<std::string>{"false", "true"}) {
    throw Error(ErrorKind::parameter, "filter stratification must use the categories false/true");
  }
  m = std::min(m, strat.total_remaining());
  const auto caps = remaining_caps(strat);
  const std::size_t h = strat.H();

  Allocation alloc;
  alloc.strata.reserve(h);
  for (const auto& s : strat.strata()) alloc.strata.push_back(s.id);
  alloc.counts.assign(h, 0);
  std::size_t left = m;
  std::vector<std::size_t> rest_caps(caps);
  for (std::size_t i = 0; i < h && left > 0; ++i) {
    if (caps[i] > 0) {
      alloc.counts[i] = 1;
      --rest_caps[i];
      --left;
    }
  }
  std::vector<double> weights;
  for (const auto& s : strat.strata()) weights.push_back(static_cast<double>(s.size()));
  const auto rest = apportion(weights, left, rest_caps);
  for (std::size_t i = 0; i < h; ++i) alloc.counts[i] += rest[i];

  FilterPriorities p;
  p.strata = alloc.strata;
  p.probe_size = alloc.counts;
  p.probed = draw(strat, alloc, seed);
  p.outcomes = p.probed.empty() ? std::vector<std::optional<bool>>{} : label(p.probed);
  if (p.outcomes.size() != p.probed.size()) throw Error(ErrorKind::consistency, "probe labeler returned wrong count");

  std::vector<std::size_t> trues(h, 0);
  for (std::size_t j = 0; j < p.probed.size(); ++j) {
    const auto& d = p.probed[j];
    const auto& o = p.outcomes[j];
    if (!o) {
      strat.record_invalid(d.stratum, d.record);
      continue;
    }
    strat.record_label(d.stratum, d.record, Category{*o ? 1u : 0u});
    if (*o) ++trues[strat.index_of(d.stratum)];
  }
  p.valid_rate.resize(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    if (p.probe_size[i] > 0) p.valid_rate[i] = static_cast<double>(trues[i]) / static_cast<double>(p.probe_size[i]);
  }
  std::vector<std::size_t> idx(h);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (p.valid_rate[a] != p.valid_rate[b]) return p.valid_rate[a] > p.valid_rate[b];
    return p.strata[a] < p.strata[b];
  });
  p.rank.resize(h);
  for (std::size_t r = 0; r < h; ++r) p.rank[idx[r]] = r + 1;
  return p;
}

std::vector<Draw> priority_draw(const FilterPriorities& priorities, const Stratification& strat, std::size_t n,
                                std::uint64_t seed) {
  if (strat.total_remaining() == 0) throw Error(ErrorKind::exhaustion, "every stratum is exhausted");
  Allocation alloc;
  std::size_t left = n;
  for (StratumId id : priorities.order()) {
    if (!strat.contains(id)) continue;
    const std::size_t take = std::min(left, strat.remaining(id));
    alloc.strata.push_back(id);
    alloc.counts.push_back(take);
    left -= take;
  }
  return draw(strat, alloc, seed);
}

}  // namespace olla
