#include "olla/query.hpp"

#include <charconv>
#include <set>

namespace olla {

const char* to_string(QueryType t) {
  switch (t) {
    case QueryType::select: return "SELECT";
    case QueryType::where: return "WHERE";
    case QueryType::groupby: return "GROUPBY";
  }
  return "GROUPBY";
}

const char* to_string(AggregateKind a) {
  switch (a) {
    case AggregateKind::avg: return "AVG";
    case AggregateKind::proportion: return "PROPORTION";
    case AggregateKind::count: return "COUNT";
  }
  return "AVG";
}

const char* to_string(Policy p) {
  switch (p) {
    case Policy::adjust: return "adjust";
    case Policy::no_adjust: return "no-adjust";
    case Policy::random: return "random";
  }
  return "adjust";
}

Policy parse_policy(const std::string& name) {
  if (name == "adjust") return Policy::adjust;
  if (name == "no-adjust") return Policy::no_adjust;
  if (name == "random") return Policy::random;
  throw Error(ErrorKind::parameter, "unknown policy '" + name + "' (expected adjust, no-adjust or random)");
}

namespace {

std::string join_fields(const std::vector<FieldError>& fields) {
  std::string out = "invalid query:";
  for (const auto& f : fields) out += " " + f.field + ": " + f.message + ";";
  if (!fields.empty()) out.pop_back();
  return out;
}

// Collects field errors while reading a JSON object.
class Reader {
 public:
  explicit Reader(std::vector<FieldError>& errors) : errors_(errors) {}

  void fail(const std::string& field, const std::string& message) { errors_.push_back({field, message}); }

  std::optional<std::string> string(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_string()) {
      fail(path, "must be a string");
      return std::nullopt;
    }
    return obj[key].get<std::string>();
  }

  std::optional<double> number(const nlohmann::json& obj, const std::string& key, const std::string& path, double lo,
                               double hi, bool open_lo = false, bool open_hi = false) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_number()) {
      fail(path, "must be a number");
      return std::nullopt;
    }
    const double v = obj[key].get<double>();
    const bool below = open_lo ? !(v > lo) : !(v >= lo);
    const bool above = open_hi ? !(v < hi) : !(v <= hi);
    if (below || above) {
      fail(path, std::string("must lie in ") + (open_lo ? "(" : "[") + format(lo) + ", " + format(hi) +
                     (open_hi ? ")" : "]"));
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::uint64_t> count(const nlohmann::json& obj, const std::string& key, const std::string& path,
                                     std::uint64_t min) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    const auto& v = obj[key];
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(path, "must be a non-negative integer");
      return std::nullopt;
    }
    const auto n = v.get<std::uint64_t>();
    if (n < min) {
      fail(path, "must be at least " + std::to_string(min));
      return std::nullopt;
    }
    return n;
  }

  std::optional<bool> boolean(const nlohmann::json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
    if (!obj[key].is_boolean()) {
      fail(path, "must be a boolean");
      return std::nullopt;
    }
    return obj[key].get<bool>();
  }

  void only(const nlohmann::json& obj, std::initializer_list<const char*> keys, const std::string& prefix) {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!allowed.count(it.key())) fail(prefix + it.key(), "unknown field");
    }
  }

 private:
  static std::string format(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
  }

  std::vector<FieldError>& errors_;
};

TaskKind task_for(QueryType t) {
  switch (t) {
    case QueryType::select: return TaskKind::extract;
    case QueryType::where: return TaskKind::filter;
    case QueryType::groupby: return TaskKind::classify;
  }
  return TaskKind::classify;
}

}  // namespace

SpecError::SpecError(std::vector<FieldError> fields)
    : Error(ErrorKind::parameter, join_fields(fields)), fields_(std::move(fields)) {}

nlohmann::ordered_json SpecError::to_json() const {
  nlohmann::ordered_json out = {{"error", "invalid query"}, {"fields", nlohmann::ordered_json::array()}};
  for (const auto& f : fields_) out["fields"].push_back({{"field", f.field}, {"message", f.message}});
  return out;
}

QuerySpec parse_query(const nlohmann::json& doc) {
  std::vector<FieldError> errors;
  Reader r(errors);
  QuerySpec q;
  if (!doc.is_object()) throw SpecError(std::vector<FieldError>{{"", "query must be a JSON object"}});
  r.only(doc, {"query_type", "aggregate", "value_column", "group_column", "task", "alpha", "theta", "gamma",
               "batch_size", "adjust_cadence", "policy", "h0", "hmax", "probe_size", "stop", "seed"},
         "");

  bool type_ok = false;
  if (auto t = r.string(doc, "query_type", "query_type")) {
    if (*t == "SELECT") q.type = QueryType::select, type_ok = true;
    else if (*t == "WHERE") q.type = QueryType::where, type_ok = true;
    else if (*t == "GROUPBY") q.type = QueryType::groupby, type_ok = true;
    else r.fail("query_type", "must be SELECT, WHERE or GROUPBY");
  } else if (!doc.contains("query_type")) {
    r.fail("query_type", "is required");
  }

  q.aggregate = q.type == QueryType::groupby ? AggregateKind::proportion : AggregateKind::avg;
  if (auto a = r.string(doc, "aggregate", "aggregate")) {
    if (*a == "AVG") q.aggregate = AggregateKind::avg;
    else if (*a == "PROPORTION") q.aggregate = AggregateKind::proportion;
    else if (*a == "COUNT") q.aggregate = AggregateKind::count;
    else r.fail("aggregate", "must be AVG, PROPORTION or COUNT");
    if (type_ok) {
      const bool grouped = q.type == QueryType::groupby;
      if (grouped && q.aggregate == AggregateKind::avg) r.fail("aggregate", "GROUPBY supports PROPORTION or COUNT");
      if (!grouped && q.aggregate != AggregateKind::avg) r.fail("aggregate", std::string(to_string(q.type)) + " supports AVG only");
    }
  }

  if (auto v = r.string(doc, "value_column", "value_column")) q.value_column = *v;
  if (type_ok && q.type == QueryType::where && q.value_column.empty()) r.fail("value_column", "is required for WHERE");
  q.group_column = r.string(doc, "group_column", "group_column");
  if (type_ok && q.group_column && q.type != QueryType::select) r.fail("group_column", "applies to SELECT only");

  if (!doc.contains("task") || !doc["task"].is_object()) {
    r.fail("task", doc.contains("task") ? "must be an object" : "is required");
  } else {
    const auto& t = doc["task"];
    r.only(t, {"kind", "categories", "target", "prompt", "strict"}, "task.");
    if (auto kind = r.string(t, "kind", "task.kind")) {
      try {
        q.task.kind = parse_task_kind(*kind);
        if (type_ok && q.task.kind != task_for(q.type)) {
          r.fail("task.kind", std::string(to_string(q.type)) + " needs a " + to_string(task_for(q.type)) + " task");
        }
      } catch (const Error&) {
        r.fail("task.kind", "must be classify, filter or extract");
      }
    } else if (!t.contains("kind")) {
      r.fail("task.kind", "is required");
    }
    if (t.contains("categories")) {
      const auto& c = t["categories"];
      if (!c.is_array() || !std::all_of(c.begin(), c.end(), [](const auto& e) { return e.is_string(); })) {
        r.fail("task.categories", "must be an array of strings");
      } else {
        q.task.categories = c.get<std::vector<std::string>>();
        std::set<std::string> uniq(q.task.categories.begin(), q.task.categories.end());
        if (q.task.kind == TaskKind::classify && q.task.categories.size() < 2) {
          r.fail("task.categories", "needs at least two categories");
        } else if (uniq.size() != q.task.categories.size() || uniq.count("")) {
          r.fail("task.categories", "must be distinct non-empty names");
        }
      }
    }
    q.task.target = r.string(t, "target", "task.target");
    if (q.task.target && q.task.kind != TaskKind::filter) r.fail("task.target", "applies to filter tasks only");
    if (auto p = r.string(t, "prompt", "task.prompt")) q.task.prompt = *p;
    if (auto s = r.boolean(t, "strict", "task.strict")) q.task.strict = *s;
  }

  if (auto v = r.number(doc, "alpha", "alpha", 0.0, 1.0, true, true)) q.alpha = *v;
  if (auto v = r.number(doc, "theta", "theta", 0.0, 1.0)) q.theta = *v;
  if (auto v = r.number(doc, "gamma", "gamma", 0.0, 1.0)) q.gamma = *v;
  if (auto v = r.count(doc, "batch_size", "batch_size", 1)) q.batch_size = *v;
  if (auto v = r.number(doc, "adjust_cadence", "adjust_cadence", 0.0, 1.0)) q.adjust_cadence = *v;
  if (auto p = r.string(doc, "policy", "policy")) {
    try {
      q.policy = parse_policy(*p);
    } catch (const Error&) {
      r.fail("policy", "must be adjust, no-adjust or random");
    }
  }
  if (auto v = r.count(doc, "h0", "h0", 1)) q.h0 = *v;
  if (auto v = r.count(doc, "hmax", "hmax", 1)) q.hmax = *v;
  if (q.h0 && q.hmax && *q.hmax < *q.h0) r.fail("hmax", "must be at least h0");
  if (auto v = r.count(doc, "probe_size", "probe_size", 1)) q.probe_size = *v;

  if (doc.contains("stop")) {
    const auto& s = doc["stop"];
    if (!s.is_object()) {
      r.fail("stop", "must be an object");
    } else {
      r.only(s, {"target_halfwidth", "relative", "sample_budget", "exhaust"}, "stop.");
      q.stop.target_halfwidth = r.number(s, "target_halfwidth", "stop.target_halfwidth", 0.0, 1e300, true);
      if (auto v = r.boolean(s, "relative", "stop.relative")) q.stop.relative = *v;
      if (auto v = r.count(s, "sample_budget", "stop.sample_budget", 0)) q.stop.sample_budget = *v;
      if (auto v = r.boolean(s, "exhaust", "stop.exhaust")) q.stop.exhaust = *v;
    }
  }
  if (auto v = r.count(doc, "seed", "seed", 0)) q.seed = *v;

  if (!errors.empty()) throw SpecError(std::move(errors));
  return q;
}

nlohmann::ordered_json to_json(const QuerySpec& q) {
  nlohmann::ordered_json task = {{"kind", to_string(q.task.kind)}};
  if (!q.task.categories.empty()) task["categories"] = q.task.categories;
  if (q.task.target) task["target"] = *q.task.target;
  if (!q.task.prompt.empty()) task["prompt"] = q.task.prompt;
  if (q.task.strict) task["strict"] = true;

  nlohmann::ordered_json out = {{"query_type", to_string(q.type)}, {"aggregate", to_string(q.aggregate)}};
  if (!q.value_column.empty()) out["value_column"] = q.value_column;
  if (q.group_column) out["group_column"] = *q.group_column;
  out["task"] = task;
  out["alpha"] = q.alpha;
  out["theta"] = q.theta;
  out["gamma"] = q.gamma;
  if (q.batch_size) out["batch_size"] = *q.batch_size;
  out["adjust_cadence"] = q.adjust_cadence;
  out["policy"] = to_string(q.policy);
  if (q.h0) out["h0"] = *q.h0;
  if (q.hmax) out["hmax"] = *q.hmax;
  if (q.probe_size) out["probe_size"] = *q.probe_size;
  nlohmann::ordered_json stop = nlohmann::ordered_json::object();
  if (q.stop.target_halfwidth) stop["target_halfwidth"] = *q.stop.target_halfwidth;
  if (q.stop.relative) stop["relative"] = true;
  if (q.stop.sample_budget) stop["sample_budget"] = *q.stop.sample_budget;
  if (q.stop.exhaust) stop["exhaust"] = true;
  out["stop"] = stop;
  out["seed"] = q.seed;
  return out;
}

std::optional<double> AggregateValue::scalar() const {
  if (grouped) return std::nullopt;
  auto it = values.find("");
  if (it == values.end()) return std::nullopt;
  return it->second;
}

nlohmann::ordered_json to_json(const AggregateValue& v) {
  if (!v.grouped) {
    auto s = v.scalar();
    return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [k, x] : v.values) out[k] = x;
  return out;
}

AggregateValue aggregate_from_json(const nlohmann::json& j) {
  AggregateValue v;
  if (j.is_null()) return v;
  if (j.is_number()) {
    v.values[""] = j.get<double>();
    return v;
  }
  if (!j.is_object()) throw Error(ErrorKind::shape, "aggregate value must be a number, null or an object");
  v.grouped = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) throw Error(ErrorKind::shape, "group value for '" + it.key() + "' is not a number");
    v.values[it.key()] = it.value().get<double>();
  }
  return v;
}

std::string group_key(const Scalar& cell) {
  if (std::holds_alternative<std::monostate>(cell)) return "null";
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* b = std::get_if<bool>(&cell)) return *b ? "true" : "false";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, std::get<double>(cell));
  return std::string(buf, p);
}

std::optional<bool> filter_truth(const Record& record, const LabelTask& task) {
  if (!record.truth_label) return std::nullopt;
  if (task.target) return *record.truth_label == *task.target;
  LabelTask strict{TaskKind::filter, {}, std::nullopt, "", true};
  if (auto o = parse_outcome(*record.truth_label, strict)) return std::get<bool>(*o);
  return std::nullopt;
}

AggregateValue ground_truth_aggregate(const QuerySpec& spec, const Corpus& corpus) {
  const double n = static_cast<double>(corpus.n_rows());
  AggregateValue out;
  switch (spec.type) {
    case QueryType::groupby: {
      out.grouped = true;
      std::map<std::string, std::size_t> counts;
      for (const auto& c : spec.task.categories) counts[c] = 0;
      for (const auto& r : corpus.records) {
        if (!r.truth_label) throw Error(ErrorKind::capability, "record " + std::to_string(r.id) + " has no truth label");
        auto it = counts.find(*r.truth_label);
        if (it != counts.end()) ++it->second;
      }
      for (const auto& [k, c] : counts) {
        out.values[k] = spec.aggregate == AggregateKind::count ? static_cast<double>(c) : static_cast<double>(c) / n;
      }
      break;
    }
    case QueryType::where: {
      double sum = 0.0;
      std::size_t matches = 0;
      for (const auto& r : corpus.records) {
        const auto truth = filter_truth(r, spec.task);
        if (!truth) throw Error(ErrorKind::capability, "record " + std::to_string(r.id) + " has no boolean truth");
        if (!*truth) continue;
        const auto v = r.numeric(spec.value_column);
        if (!v) continue;
        sum += *v;
        ++matches;
      }
      if (matches > 0) out.values[""] = sum / static_cast<double>(matches);
      break;
    }
    case QueryType::select: {
      out.grouped = spec.group_column.has_value();
      std::map<std::string, std::pair<double, std::size_t>> acc;
      for (const auto& r : corpus.records) {
        if (!r.truth_value) throw Error(ErrorKind::capability, "record " + std::to_string(r.id) + " has no truth value");
        std::string key;
        if (spec.group_column) {
          auto it = r.structured.find(*spec.group_column);
          key = group_key(it == r.structured.end() ? Scalar{} : it->second);
        }
        auto& [sum, count] = acc[key];
        sum += *r.truth_value;
        ++count;
      }
      for (const auto& [k, sc] : acc) out.values[k] = sc.first / static_cast<double>(sc.second);
      break;
    }
  }
  return out;
}

}  // namespace olla
