#include "olla/report.hpp"

#include <cmath>
#include <cstdio>

#include "olla/estimate.hpp"

namespace olla {

bool within_bound(const ProgressiveEstimate& e, double bound, bool relative) {
  if (e.estimate.values.empty()) return false;
  for (const auto& [key, value] : e.estimate.values) {
    auto it = e.halfwidth.values.find(key);
    if (it == e.halfwidth.values.end()) return false;
    const double limit = relative ? bound * std::abs(value) : bound;
    if (!(it->second <= limit)) return false;
  }
  return true;
}

std::optional<ProgressiveEstimate> first_within(const std::vector<ProgressiveEstimate>& emissions, double bound,
                                                bool relative) {
  for (const auto& e : emissions) {
    if (within_bound(e, bound, relative)) return e;
  }
  return std::nullopt;
}

namespace {

std::optional<double> max_error(const ProgressiveEstimate& e, const AggregateValue& truth) {
  if (truth.values.empty() || e.estimate.values.size() != truth.values.size()) return std::nullopt;
  try {
    return absolute_error(e.estimate.values, truth.values).max;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

ConvergenceReport convergence_report(const RunLog& log, std::optional<AggregateValue> ground_truth) {
  ConvergenceReport r;
  const auto start = log.first("start");
  if (start) {
    r.n_records = start->at("plan").value("N", std::size_t{0});
    r.relative = start->at("query").value("aggregate", std::string()) == "AVG";
    if (!ground_truth && start->contains("ground_truth")) ground_truth = aggregate_from_json((*start)["ground_truth"]);
  }
  const auto emissions = log.emissions();
  for (const auto& e : emissions) {
    ReportRow row{e.sequence_no, e.elapsed, e.n_labeled, e.cumulative_valids, std::nullopt, e.max_halfwidth()};
    if (ground_truth) row.abs_error = max_error(e, *ground_truth);
    r.rows.push_back(row);
  }
  if (!emissions.empty() && emissions.back().n_labeled > 0) {
    const auto& last = emissions.back();
    r.full_time = last.elapsed / static_cast<double>(last.n_labeled) * static_cast<double>(r.n_records);
  }
  for (double bound : {0.01, 0.05}) {
    BoundReach reach;
    reach.bound = bound;
    if (auto e = first_within(emissions, bound, r.relative)) {
      reach.elapsed = e->elapsed;
      reach.n_labeled = e->n_labeled;
      if (r.full_time > 0.0) reach.fraction = e->elapsed / r.full_time;
    }
    r.reaches.push_back(reach);
  }
  return r;
}

std::string ConvergenceReport::render() const {
  std::string out;
  out += pad("seq", 5) + pad("elapsed_s", 12) + pad("n_labeled", 11) + pad("valids", 9) + pad("abs_error", 12) +
         pad("halfwidth", 12) + "\n";
  for (const auto& row : rows) {
    out += pad(std::to_string(row.sequence_no), 5) + pad(fmt("%.4f", row.elapsed), 12) +
           pad(std::to_string(row.n_labeled), 11) + pad(std::to_string(row.cumulative_valids), 9) +
           pad(row.abs_error ? fmt("%.6f", *row.abs_error) : "-", 12) +
           pad(row.halfwidth ? fmt("%.6f", *row.halfwidth) : "-", 12) + "\n";
  }
  out += "\n";
  out += pad("bound", 7) + pad("time-to-bound_s", 17) + pad("fraction_of_full", 18) + pad("n_labeled", 11) + "\n";
  for (const auto& reach : reaches) {
    const std::string label = fmt("%.0f%%", reach.bound * 100.0);
    if (!reach.elapsed) {
      out += pad(label, 7) + pad("not reached", 17) + pad("-", 18) + pad("-", 11) + "\n";
      continue;
    }
    out += pad(label, 7) + pad(fmt("%.4f", *reach.elapsed), 17) +
           pad(reach.fraction ? fmt("%.2f%%", *reach.fraction * 100.0) : "-", 18) +
           pad(std::to_string(*reach.n_labeled), 11) + "\n";
  }
  for (const auto& reach : reaches) {
    out += "time-to-" + fmt("%.0f%%", reach.bound * 100.0) + ": " +
           (reach.fraction ? fmt("%.2f%% of full-data time", *reach.fraction * 100.0) : std::string("not reached")) +
           "\n";
  }
  out += "full-data time estimate: " + fmt("%.4f", full_time) + " s (" + (relative ? "relative" : "absolute") +
         " bounds)\n";
  return out;
}

nlohmann::ordered_json ConvergenceReport::to_json() const {
  auto opt = [](const auto& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    rows_json.push_back({{"sequence_no", row.sequence_no},
                         {"elapsed", row.elapsed},
                         {"n_labeled", row.n_labeled},
                         {"cumulative_valids", row.cumulative_valids},
                         {"abs_error", opt(row.abs_error)},
                         {"halfwidth", opt(row.halfwidth)}});
  }
  nlohmann::ordered_json reach_json = nlohmann::ordered_json::array();
  for (const auto& reach : reaches) {
    reach_json.push_back({{"bound", reach.bound},
                          {"elapsed", opt(reach.elapsed)},
                          {"fraction", opt(reach.fraction)},
                          {"n_labeled", opt(reach.n_labeled)}});
  }
  return {{"n_records", n_records},
          {"relative", relative},
          {"full_time", full_time},
          {"rows", std::move(rows_json)},
          {"time_to_bound", std::move(reach_json)}};
}

}  // namespace olla
