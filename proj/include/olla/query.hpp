#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "olla/corpus.hpp"
#include "olla/error.hpp"
#include "olla/label.hpp"

namespace olla {

enum class QueryType { select, where, groupby };
enum class AggregateKind { avg, proportion, count };
enum class Policy { adjust, no_adjust, random };

const char* to_string(QueryType t);
const char* to_string(AggregateKind a);
const char* to_string(Policy p);
Policy parse_policy(const std::string& name);

struct StopSpec {
  std::optional<double> target_halfwidth;
  bool relative = false;  // target is a fraction of |estimate|
  std::optional<std::size_t> sample_budget;
  bool exhaust = false;

  bool any() const { return target_halfwidth || sample_budget || exhaust; }
};

struct QuerySpec {
  QueryType type = QueryType::groupby;
  AggregateKind aggregate = AggregateKind::proportion;
  std::string value_column;                 // WHERE: column averaged over matching records
  std::optional<std::string> group_column;  // SELECT: structured grouping key
  LabelTask task;
  double alpha = 0.95;
  double theta = 0.3;
  double gamma = 0.8;
  std::optional<std::size_t> batch_size;  // default max(32, ceil(N/100))
  double adjust_cadence = 0.1;            // fraction of the corpus sampled between adjustment passes
  Policy policy = Policy::adjust;
  std::optional<std::size_t> h0;
  std::optional<std::size_t> hmax;
  std::optional<std::size_t> probe_size;
  StopSpec stop;
  std::uint64_t seed = 0;
};

struct FieldError {
  std::string field;
  std::string message;
};

/// Parameter error carrying every offending field of a query document.
class SpecError : public Error {
 public:
  explicit SpecError(std::vector<FieldError> fields);
  const std::vector<FieldError>& fields() const { return fields_; }
  nlohmann::ordered_json to_json() const;

 private:
  std::vector<FieldError> fields_;
};

/// Parses and validates a query document; reports all field problems at once.
QuerySpec parse_query(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const QuerySpec& spec);

/// Per-key values; scalar results use the single key "".
struct AggregateValue {
  bool grouped = false;
  std::map<std::string, double> values;

  std::optional<double> scalar() const;
  bool operator==(const AggregateValue&) const = default;
};

nlohmann::ordered_json to_json(const AggregateValue& v);
AggregateValue aggregate_from_json(const nlohmann::json& j);

/// String key for a structured cell.
std::string group_key(const Scalar& cell);

/// Truth predicate of a filter task for one record; nullopt when unknown.
std::optional<bool> filter_truth(const Record& record, const LabelTask& task);

/// The exact answer computed from the corpus truth columns over every record.
/// Throws a capability error when the needed truth is missing.
AggregateValue ground_truth_aggregate(const QuerySpec& spec, const Corpus& corpus);

}  // namespace olla
