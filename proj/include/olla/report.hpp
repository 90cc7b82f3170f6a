#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "olla/engine.hpp"

namespace olla {

/// Whether every key's half-width is within `bound`; relative bounds scale by
/// |estimate|. False while any key is warming up.
bool within_bound(const ProgressiveEstimate& e, double bound, bool relative);

/// First emission meeting the bound, if any.
std::optional<ProgressiveEstimate> first_within(const std::vector<ProgressiveEstimate>& emissions, double bound,
                                                bool relative);

struct ReportRow {
  std::size_t sequence_no = 0;
  double elapsed = 0.0;
  std::size_t n_labeled = 0;
  std::size_t cumulative_valids = 0;
  std::optional<double> abs_error;  // max over keys
  std::optional<double> halfwidth;  // max over keys
};

struct BoundReach {
  double bound = 0.0;
  std::optional<double> elapsed;
  std::optional<double> fraction;  // of the full-data time
  std::optional<std::size_t> n_labeled;
};

struct ConvergenceReport {
  std::vector<ReportRow> rows;
  std::size_t n_records = 0;
  bool relative = false;     // bounds scale with |estimate| (AVG queries)
  double full_time = 0.0;    // exhaustive-run time extrapolated from the final emission
  std::vector<BoundReach> reaches;  // 1% and 5%

  std::string render() const;
  nlohmann::ordered_json to_json() const;
};

/// Per-emission table plus time-to-1% and time-to-5% as fractions of the
/// full-data time. The ground truth defaults to the one in the log's start event.
ConvergenceReport convergence_report(const RunLog& log, std::optional<AggregateValue> ground_truth = std::nullopt);

}  // namespace olla
