#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "olla/stratify.hpp"

namespace olla {

/// Per-stratum sample sizes for one iteration, aligned with `strata`.
struct Allocation {
  std::vector<StratumId> strata;
  std::vector<std::size_t> counts;
  std::size_t iteration = 0;

  std::size_t total() const;
  std::size_t count(StratumId id) const;
};

/// Largest-remainder apportionment of `n` units by `weights`, never exceeding
/// `caps`. Remainder ties go to the lower index. Units that cannot be placed
/// by weight (all weighted slots full) are spread over the remaining capacity
/// in proportion to it. The result sums to min(n, sum(caps)).
std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t n,
                                   std::span<const std::size_t> caps);

/// n_h proportional to N_h, capped at each stratum's unconsumed members.
Allocation proportional_allocation(const Stratification& strat, std::size_t n, std::size_t iteration = 0);

/// n_h proportional to N_h sqrt(V_h). Strata with V_h = 0 get one sample first;
/// strata never sampled use the maximum heterogeneity 1 - 1/K. Falls back to
/// proportional allocation when every variance is zero.
Allocation neyman_allocation(const Stratification& strat, std::size_t n, std::size_t iteration = 1);

struct Draw {
  StratumId stratum = 0;
  RecordId record = 0;

  bool operator==(const Draw&) const = default;
};

/// Uniform without-replacement draw of `alloc.counts[i]` unconsumed members of
/// each stratum. Deterministic in (state, seed); does not mark anything.
std::vector<Draw> draw(const Stratification& strat, const Allocation& alloc, std::uint64_t seed);

struct FilterPriorities {
  std::vector<StratumId> strata;
  std::vector<double> valid_rate;         // p_h
  std::vector<std::size_t> rank;          // 1 = sampled first
  std::vector<std::size_t> probe_size;    // m_h
  std::vector<Draw> probed;
  std::vector<std::optional<bool>> outcomes;  // aligned with `probed`; nullopt = invalid reply

  /// Stratum ids in rank order.
  std::vector<StratumId> order() const;
};

/// Labels a batch of draws; one entry per draw, nullopt for an invalid reply.
using FilterLabelFn = std::function<std::vector<std::optional<bool>>(const std::vector<Draw>&)>;

/// Probes m records (one per stratum first, the rest proportional to size),
/// records the outcomes under the categories "false"/"true", and ranks strata
/// by descending valid rate with ties to the lower stratum id.
FilterPriorities probe_valid_rates(Stratification& strat, std::size_t m, const FilterLabelFn& label,
                                   std::uint64_t seed);

/// Fills `n` draws by exhausting strata in priority order.
std::vector<Draw> priority_draw(const FilterPriorities& priorities, const Stratification& strat, std::size_t n,
                                std::uint64_t seed);

}  // namespace olla
