#include "olla/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "olla/estimate.hpp"
#include "olla/rng.hpp"
#include "olla/sample.hpp"
#include "olla/stratify.hpp"

namespace olla {

const char* to_string(RunState s) {
  switch (s) {
    case RunState::pending: return "pending";
    case RunState::running: return "running";
    case RunState::converged: return "converged";
    case RunState::stopped: return "stopped";
    case RunState::aborted: return "aborted";
    case RunState::exhausted: return "exhausted";
  }
  return "pending";
}

RunState parse_run_state(const std::string& name) {
  for (auto s : {RunState::pending, RunState::running, RunState::converged, RunState::stopped, RunState::aborted,
                 RunState::exhausted}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorKind::parameter, "unknown run state '" + name + "'");
}

bool is_terminal(RunState s) { return s != RunState::pending && s != RunState::running; }

std::optional<double> ProgressiveEstimate::max_halfwidth() const {
  if (estimate.values.empty()) return std::nullopt;
  double worst = 0.0;
  for (const auto& [key, value] : estimate.values) {
    auto it = halfwidth.values.find(key);
    if (it == halfwidth.values.end()) return std::nullopt;
    worst = std::max(worst, it->second);
  }
  return worst;
}

nlohmann::ordered_json to_json(const ProgressiveEstimate& e) {
  return {{"sequence_no", e.sequence_no},
          {"elapsed", e.elapsed},
          {"iteration", e.iteration},
          {"n_labeled", e.n_labeled},
          {"cumulative_valids", e.cumulative_valids},
          {"estimate", to_json(e.estimate)},
          {"halfwidth", to_json(e.halfwidth)},
          {"converged", e.converged},
          {"final", e.final},
          {"state", to_string(e.state)},
          {"stop_reason", e.stop_reason},
          {"strata", e.strata},
          {"max_normalized_variance", e.max_normalized_variance}};
}

ProgressiveEstimate estimate_from_json(const nlohmann::json& j) {
  try {
    ProgressiveEstimate e;
    e.sequence_no = j.at("sequence_no").get<std::size_t>();
    e.elapsed = j.at("elapsed").get<double>();
    e.iteration = j.at("iteration").get<std::size_t>();
    e.n_labeled = j.at("n_labeled").get<std::size_t>();
    e.cumulative_valids = j.at("cumulative_valids").get<std::size_t>();
    e.estimate = aggregate_from_json(j.at("estimate"));
    e.halfwidth = aggregate_from_json(j.at("halfwidth"));
    if (e.estimate.grouped) e.halfwidth.grouped = true;
    e.converged = j.at("converged").get<bool>();
    e.final = j.at("final").get<bool>();
    e.state = parse_run_state(j.at("state").get<std::string>());
    e.stop_reason = j.at("stop_reason").get<std::string>();
    e.strata = j.at("strata").get<std::size_t>();
    e.max_normalized_variance = j.at("max_normalized_variance").get<double>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::shape, std::string("malformed estimate: ") + ex.what());
  }
}

bool ExecutablePlan::has_stage(const std::string& name) const {
  return std::find(stages.begin(), stages.end(), name) != stages.end();
}

nlohmann::ordered_json ExecutablePlan::to_json() const {
  nlohmann::ordered_json out = {{"query_type", olla::to_string(query.type)},
                                {"policy", olla::to_string(query.policy)},
                                {"stages", stages},
                                {"N", n}};
  if (query.type == QueryType::groupby) {
    out["K"] = categories.size();
    out["categories"] = categories;
  }
  out["H0"] = h0;
  out["Hmax"] = hmax;
  out["batch_size"] = batch_size;
  if (query.type == QueryType::where) out["probe_size"] = probe_size;
  return out;
}

namespace {

TaskKind expected_task(QueryType t) {
  switch (t) {
    case QueryType::select: return TaskKind::extract;
    case QueryType::where: return TaskKind::filter;
    case QueryType::groupby: return TaskKind::classify;
  }
  return TaskKind::classify;
}

[[noreturn]] void plan_error(const std::string& message) { throw Error(ErrorKind::plan, message); }

}  // namespace

ExecutablePlan plan(const QuerySpec& query, std::shared_ptr<const Corpus> corpus, const PlanOptions& options) {
  if (!corpus || corpus->n_rows() == 0) plan_error("empty corpus");
  ExecutablePlan p;
  p.query = query;
  p.corpus = corpus;
  p.n = corpus->n_rows();
  const auto& q = query;

  if (q.task.kind != expected_task(q.type)) {
    plan_error(std::string(to_string(q.type)) + " needs a " + to_string(expected_task(q.type)) + " task, got " +
               to_string(q.task.kind));
  }
  if (!(q.theta >= 0.0 && q.theta <= 1.0) || !(q.gamma >= 0.0 && q.gamma <= 1.0)) {
    plan_error("theta and gamma must lie in [0, 1]");
  }
  if (!(q.alpha > 0.0 && q.alpha < 1.0)) plan_error("alpha must lie in (0, 1)");
  if (!(q.adjust_cadence >= 0.0 && q.adjust_cadence <= 1.0)) plan_error("adjust_cadence must lie in [0, 1]");

  StrataCount counts{1, 1};
  switch (q.type) {
    case QueryType::groupby: {
      if (q.aggregate == AggregateKind::avg) plan_error("GROUPBY supports PROPORTION or COUNT");
      p.categories = q.task.categories;
      if (p.categories.empty()) {
        std::set<std::string> seen;
        for (const auto& r : corpus->records) {
          if (r.truth_label) seen.insert(*r.truth_label);
        }
        p.categories.assign(seen.begin(), seen.end());
      }
      std::sort(p.categories.begin(), p.categories.end());
      LabelTask task = q.task;
      task.categories = p.categories;
      try {
        task.validate();
      } catch (const Error& e) {
        plan_error(std::string("classify task: ") + e.what());
      }
      p.query.task.categories = p.categories;
      counts = initial_strata_count(p.n, p.categories.size());
      break;
    }
    case QueryType::where: {
      if (q.aggregate != AggregateKind::avg) plan_error("WHERE supports AVG only");
      const auto* col = corpus->column(q.value_column);
      if (!col) plan_error("value column '" + q.value_column + "' not in the corpus");
      if (col->type != ColumnType::numeric) plan_error("value column '" + q.value_column + "' is not numeric");
      counts = initial_strata_count(p.n, 2);
      break;
    }
    case QueryType::select: {
      if (q.aggregate != AggregateKind::avg) plan_error("SELECT supports AVG only");
      if (q.group_column && !corpus->has_column(*q.group_column)) {
        plan_error("group column '" + *q.group_column + "' not in the corpus");
      }
      break;
    }
  }

  if (q.type == QueryType::select) {
    std::set<std::string> keys;
    for (const auto& r : corpus->records) {
      if (!q.group_column) break;
      auto it = r.structured.find(*q.group_column);
      keys.insert(group_key(it == r.structured.end() ? Scalar{} : it->second));
    }
    p.h0 = p.hmax = std::max<std::size_t>(1, keys.size());
  } else if (q.policy == Policy::random) {
    p.h0 = p.hmax = 1;
  } else {
    p.h0 = q.h0 ? std::min(*q.h0, p.n) : counts.h0;
    if (q.hmax) p.hmax = std::min(std::max(*q.hmax, p.h0), p.n);
    else p.hmax = q.h0 ? std::min(2 * p.h0, p.n) : counts.hmax;
    if (q.policy == Policy::no_adjust) p.hmax = p.h0;
  }

  p.batch_size = q.batch_size ? *q.batch_size
                              : std::max<std::size_t>(32, static_cast<std::size_t>(std::ceil(p.n / 100.0)));
  if (q.type == QueryType::where) {
    p.probe_size = q.probe_size ? *q.probe_size
                                : std::max(p.h0, static_cast<std::size_t>(std::ceil(p.n / 100.0)));
  }

  const bool needs_embedding = q.type != QueryType::select && q.policy != Policy::random;
  if (needs_embedding) {
    if (options.embeddings) {
      if (options.embeddings->rows() != p.n) {
        plan_error("embedding matrix has " + std::to_string(options.embeddings->rows()) + " rows for " +
                   std::to_string(p.n) + " records");
      }
      p.embeddings = options.embeddings;
    } else if (options.embedder) {
      p.embedder = options.embedder;
      p.stages.push_back("embed");
    } else {
      plan_error("no embeddings or embedder configured");
    }
  }
  switch (q.type) {
    case QueryType::select:
      for (const char* s : {"sample", "extract", "estimate"}) p.stages.push_back(s);
      break;
    case QueryType::where:
      if (needs_embedding) p.stages.push_back("cluster");
      for (const char* s : {"probe", "priority_sample", "filter", "estimate"}) p.stages.push_back(s);
      break;
    case QueryType::groupby:
      if (needs_embedding) p.stages.push_back("cluster");
      for (const char* s : {"sample", "classify"}) p.stages.push_back(s);
      if (q.policy == Policy::adjust) p.stages.push_back("adjust");
      p.stages.push_back("estimate");
      break;
  }
  return p;
}

ExecutablePlan plan(const QuerySpec& query, const Corpus& corpus, const PlanOptions& options) {
  return plan(query, std::shared_ptr<const Corpus>(std::shared_ptr<const Corpus>{}, &corpus), options);
}

namespace {

nlohmann::ordered_json outcome_json(const LabelResult& r) {
  if (!r.outcome) return nullptr;
  return std::visit([](const auto& v) { return nlohmann::ordered_json(v); }, *r.outcome);
}

struct Verdict {
  bool done = false;
  RunState state = RunState::running;
  std::string reason;
};

class Runner {
 public:
  Runner(const ExecutablePlan& plan, Labeler& labeler, const Emitter& emit, const RunControl& control,
         const RunOptions& options)
      : plan_(plan),
        q_(plan.query),
        corpus_(*plan.corpus),
        labeler_(labeler),
        emit_(emit),
        control_(control),
        options_(options),
        start_(std::chrono::steady_clock::now()) {
    task_ = q_.task;
    if (q_.type == QueryType::groupby) task_.categories = plan.categories;
  }

  RunLog execute() {
    nlohmann::ordered_json start = {{"event", "start"}, {"query", to_json(q_)}, {"plan", plan_.to_json()}};
    try {
      start["ground_truth"] = to_json(ground_truth_aggregate(q_, corpus_));
    } catch (const Error&) {
      // no truth columns: nothing to compare against
    }
    log_.events.push_back(std::move(start));
    try {
      labeler_.check(corpus_, task_);
      switch (q_.type) {
        case QueryType::groupby: run_groupby(); break;
        case QueryType::where: run_where(); break;
        case QueryType::select: run_select(); break;
      }
    } catch (const std::exception& ex) {
      finish({true, RunState::aborted, ex.what()});
    }
    return std::move(log_);
  }

 private:
  // ---- shared plumbing

  double elapsed() const {
    if (options_.seconds_per_call) return static_cast<double>(n_labeled_) * *options_.seconds_per_call;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  std::size_t budget_left() const {
    if (!q_.stop.sample_budget) return std::numeric_limits<std::size_t>::max();
    return *q_.stop.sample_budget > n_labeled_ ? *q_.stop.sample_budget - n_labeled_ : 0;
  }

  bool target_met(const ProgressiveEstimate& e) const {
    if (!q_.stop.target_halfwidth || e.estimate.values.empty()) return false;
    for (const auto& [key, value] : e.estimate.values) {
      auto it = e.halfwidth.values.find(key);
      if (it == e.halfwidth.values.end()) return false;
      const double bound = q_.stop.relative ? *q_.stop.target_halfwidth * std::abs(value) : *q_.stop.target_halfwidth;
      if (!(it->second <= bound)) return false;
    }
    return true;
  }

  Verdict judge(const ProgressiveEstimate& e, std::size_t remaining, bool pure) const {
    if (target_met(e) && pure) return {true, RunState::converged, "target_halfwidth"};
    if (control_.stop_requested()) return {true, RunState::stopped, "stop_requested"};
    if (q_.stop.sample_budget && n_labeled_ >= *q_.stop.sample_budget) return {true, RunState::stopped, "sample_budget"};
    if (remaining == 0) return {true, RunState::exhausted, "exhausted"};
    return {};
  }

  void publish(ProgressiveEstimate e) {
    e.sequence_no = sequence_++;
    e.elapsed = elapsed();
    e.iteration = iteration_;
    e.n_labeled = n_labeled_;
    e.cumulative_valids = valids_;
    e.halfwidth.grouped = e.estimate.grouped;
    nlohmann::ordered_json ev = {{"event", "estimate"}};
    const auto body = to_json(e);
    for (const auto& [k, v] : body.items()) ev[k] = v;
    log_.events.push_back(std::move(ev));
    last_ = e;
    if (emit_) emit_(e);
  }

  // Emits the batch estimate; returns true when the run is over.
  bool emit_and_judge(std::size_t remaining, bool pure) {
    ProgressiveEstimate e = current();
    const Verdict v = judge(e, remaining, pure);
    if (v.done) {
      finish(v, std::move(e));
      return true;
    }
    publish(std::move(e));
    return false;
  }

  void finish(const Verdict& v, std::optional<ProgressiveEstimate> e = std::nullopt) {
    if (finished_) return;
    finished_ = true;
    if (!e) {
      try {
        e = current();
      } catch (const std::exception&) {
        e = ProgressiveEstimate{};
      }
    }
    e->final = true;
    e->state = v.state;
    e->stop_reason = v.reason;
    e->converged = v.state == RunState::converged;
    publish(*e);
    nlohmann::ordered_json end = {{"event", "end"},
                                  {"state", to_string(v.state)},
                                  {"stop_reason", v.reason},
                                  {"n_labeled", n_labeled_},
                                  {"cumulative_valids", valids_}};
    log_.events.push_back(std::move(end));
  }

  void log_draw(const std::vector<Draw>& draws, std::uint64_t seed, const char* phase) {
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& d : draws) records.push_back({d.stratum, d.record});
    log_.events.push_back({{"event", "draw"},
                           {"phase", phase},
                           {"iteration", iteration_},
                           {"seed", seed},
                           {"records", std::move(records)}});
  }

  // Labels the draws concurrently and returns the results in draw order; a
  // missing entry was cancelled before it started.
  std::vector<std::optional<LabelResult>> label(const std::vector<Draw>& draws) {
    std::vector<RecordId> ids;
    ids.reserve(draws.size());
    for (const auto& d : draws) ids.push_back(d.record);
    std::vector<std::optional<LabelResult>> results(ids.size());
    label_concurrently(
        labeler_, corpus_, task_, ids, [&](std::size_t i, LabelResult r) { results[i] = std::move(r); },
        control_.flag());
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) continue;
      ++n_labeled_;
      if (!options_.log_labels) continue;
      const auto& r = *results[i];
      nlohmann::ordered_json ev = {{"event", "label"},
                                   {"record", r.record_id},
                                   {"stratum", draws[i].stratum},
                                   {"valid", r.valid},
                                   {"outcome", outcome_json(r)},
                                   {"raw", r.raw}};
      if (!options_.seconds_per_call) ev["latency_us"] = r.latency.count();
      log_.events.push_back(std::move(ev));
    }
    return results;
  }

  ProgressiveEstimate current() const {
    switch (q_.type) {
      case QueryType::groupby: return groupby_estimate();
      case QueryType::where: return where_estimate();
      case QueryType::select: return select_current();
    }
    return {};
  }

  const EmbeddingMatrix& matrix() {
    if (!matrix_) {
      if (plan_.embeddings) {
        matrix_ = normalize_rows(*plan_.embeddings);
      } else {
        matrix_ = normalize_rows(embed_corpus(corpus_, *plan_.embedder));
      }
      log_.events.push_back({{"event", "embed"}, {"rows", matrix_->rows()}, {"dim", matrix_->dim()}});
    }
    return *matrix_;
  }

  Stratification partition(const std::vector<std::string>& categories) {
    if (q_.policy == Policy::random) {
      Stratification s(categories, plan_.n, 1, 1);
      std::vector<RecordId> all(plan_.n);
      std::iota(all.begin(), all.end(), 0);
      s.add_stratum(std::move(all), EmbeddingVector());
      return s;
    }
    const std::uint64_t seed = derive_seed(q_.seed, 1);
    auto s = kmeans_partition(matrix(), plan_.h0, seed, PartitionSetup{categories, plan_.hmax});
    nlohmann::ordered_json sizes = nlohmann::ordered_json::array();
    for (const auto& st : s.strata()) sizes.push_back(st.size());
    log_.events.push_back({{"event", "partition"}, {"seed", seed}, {"H", s.H()}, {"sizes", std::move(sizes)}});
    return s;
  }

  double max_normalized_variance() const {
    double worst = 0.0;
    if (!strat_ || strat_->K() < 2) return worst;
    for (const auto& s : strat_->strata()) {
      if (s.stats.m > 0) worst = std::max(worst, normalized_variance(s.stats, strat_->K()));
    }
    return worst;
  }

  // ---- GROUPBY

  ProgressiveEstimate groupby_estimate() const {
    ProgressiveEstimate e;
    e.estimate.grouped = true;
    if (!strat_) return e;
    e.strata = strat_->H();
    e.max_normalized_variance = max_normalized_variance();
    std::size_t m = 0;
    for (const auto& s : strat_->strata()) m += s.stats.m;
    if (m == 0) return e;
    const auto g = group_estimate(*strat_, IntervalSpec{q_.alpha, std::nullopt});
    const double scale = q_.aggregate == AggregateKind::count ? static_cast<double>(plan_.n) : 1.0;
    for (std::size_t k = 0; k < g.categories.size(); ++k) {
      e.estimate.values[g.categories[k]] = scale * g.point[k];
      if (m >= 2) e.halfwidth.values[g.categories[k]] = scale * g.halfwidth[k];
    }
    return e;
  }

  bool pure() const {
    if (q_.policy != Policy::adjust || !strat_) return true;
    for (const auto& s : strat_->strata()) {
      if (s.stats.m == 0) return false;
      if (normalized_variance(s.stats, strat_->K()) > q_.theta) return false;
    }
    return true;
  }

  void adjustment_pass() {
    std::vector<StratumId> ids;
    for (const auto& s : strat_->strata()) ids.push_back(s.id);
    for (StratumId id : ids) {
      if (!strat_->contains(id)) continue;
      const auto p = plan_adjustment(*strat_, id, q_.theta, q_.gamma, matrix());
      if (p.kind == AdjustmentPlan::Kind::none) continue;
      apply_adjustment(*strat_, p, matrix());
      nlohmann::ordered_json ev = {{"event", "adjust"}, {"iteration", iteration_}};
      const auto body = plan_json(p);
      for (const auto& [k, v] : body.items()) ev[k] = v;
      ev["H"] = strat_->H();
      log_.events.push_back(std::move(ev));
    }
  }

  void run_groupby() {
    strat_.emplace(partition(plan_.categories));
    const std::size_t step =
        q_.adjust_cadence > 0.0
            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q_.adjust_cadence * plan_.n)))
            : 1;
    std::size_t next_adjust = step;

    {
      ProgressiveEstimate e = current();
      const Verdict v = judge(e, strat_->total_remaining(), false);
      if (v.done) return finish(v, std::move(e));
    }
    for (;;) {
      const std::size_t n = std::min({plan_.batch_size, budget_left(), strat_->total_remaining()});
      const Allocation alloc = iteration_ == 0 ? proportional_allocation(*strat_, n, iteration_)
                                               : neyman_allocation(*strat_, n, iteration_);
      const std::uint64_t seed = derive_seed(q_.seed, 0x100 + iteration_);
      const auto draws = draw(*strat_, alloc, seed);
      log_draw(draws, seed, "sample");
      const auto results = label(draws);
      for (std::size_t i = 0; i < draws.size(); ++i) {
        if (!results[i]) continue;
        const std::string* cat = results[i]->valid ? results[i]->category() : nullptr;
        if (cat) {
          strat_->record_label(draws[i].stratum, draws[i].record, *cat);
          ++valids_;
        } else {
          strat_->record_invalid(draws[i].stratum, draws[i].record);
        }
      }
      ++iteration_;
      if (q_.policy == Policy::adjust && strat_->total_consumed() >= next_adjust) {
        adjustment_pass();
        while (next_adjust <= strat_->total_consumed()) next_adjust += step;
      }
      if (emit_and_judge(strat_->total_remaining(), pure())) return;
    }
  }

  // ---- WHERE

  void add_filter_outcome(const Draw& d, const std::optional<bool>& outcome) {
    if (!outcome) {
      strat_->record_invalid(d.stratum, d.record);
      return;
    }
    strat_->record_label(d.stratum, d.record, Category{*outcome ? 1u : 0u});
    if (!*outcome) return;
    ++valids_;
    if (auto v = corpus_.records[d.record].numeric(q_.value_column)) moments_ = update_moments(moments_, *v);
  }

  ProgressiveEstimate where_estimate() const {
    ProgressiveEstimate e;
    if (strat_) {
      e.strata = strat_->H();
      e.max_normalized_variance = max_normalized_variance();
    }
    const auto f = filter_estimate(moments_, IntervalSpec{q_.alpha, std::nullopt});
    if (f.point) e.estimate.values[""] = *f.point;
    if (f.halfwidth) e.halfwidth.values[""] = *f.halfwidth;
    return e;
  }

  void run_where() {
    strat_.emplace(partition({"false", "true"}));
    {
      ProgressiveEstimate e = current();
      const Verdict v = judge(e, strat_->total_remaining(), true);
      if (v.done) return finish(v, std::move(e));
    }
    const std::size_t m = std::min(plan_.probe_size, budget_left());
    const std::uint64_t probe_seed = derive_seed(q_.seed, 2);
    auto probe_labels = [&](const std::vector<Draw>& draws) {
      log_draw(draws, probe_seed, "probe");
      const auto results = label(draws);
      std::vector<std::optional<bool>> out(draws.size());
      for (std::size_t i = 0; i < draws.size(); ++i) {
        if (results[i] && results[i]->valid) out[i] = results[i]->boolean();
      }
      return out;
    };
    // The probe records its own outcomes; moments and valids are added here.
    priorities_ = probe_valid_rates(*strat_, m, probe_labels, probe_seed);
    for (std::size_t i = 0; i < priorities_.probed.size(); ++i) {
      const auto& o = priorities_.outcomes[i];
      if (!o || !*o) continue;
      ++valids_;
      if (auto v = corpus_.records[priorities_.probed[i].record].numeric(q_.value_column)) {
        moments_ = update_moments(moments_, *v);
      }
    }
    nlohmann::ordered_json strata = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < priorities_.strata.size(); ++i) {
      strata.push_back({{"stratum", priorities_.strata[i]},
                        {"probe_size", priorities_.probe_size[i]},
                        {"valid_rate", priorities_.valid_rate[i]},
                        {"rank", priorities_.rank[i]}});
    }
    log_.events.push_back({{"event", "probe"}, {"m", m}, {"strata", std::move(strata)}});
    ++iteration_;
    if (emit_and_judge(strat_->total_remaining(), true)) return;

    for (;;) {
      const std::size_t n = std::min({plan_.batch_size, budget_left(), strat_->total_remaining()});
      const std::uint64_t seed = derive_seed(q_.seed, 0x100 + iteration_);
      const auto draws = priority_draw(priorities_, *strat_, n, seed);
      log_draw(draws, seed, "sample");
      const auto results = label(draws);
      for (std::size_t i = 0; i < draws.size(); ++i) {
        if (!results[i]) continue;
        add_filter_outcome(draws[i], results[i]->valid ? results[i]->boolean() : std::nullopt);
      }
      ++iteration_;
      if (emit_and_judge(strat_->total_remaining(), true)) return;
    }
  }

  // ---- SELECT

  ProgressiveEstimate select_current() const {
    ProgressiveEstimate e;
    e.estimate.grouped = q_.group_column.has_value();
    e.strata = groups_.size();
    for (const auto& [key, est] : select_estimate(group_moments_, IntervalSpec{q_.alpha, std::nullopt})) {
      if (est.point) e.estimate.values[key] = *est.point;
      if (est.halfwidth) e.halfwidth.values[key] = *est.halfwidth;
    }
    return e;
  }

  std::size_t select_remaining() const {
    std::size_t r = 0;
    for (const auto& g : groups_) r += g.members.size() - g.cursor;
    return r;
  }

  void run_select() {
    std::map<std::string, std::vector<RecordId>> by_key;
    for (const auto& r : corpus_.records) {
      std::string key;
      if (q_.group_column) {
        auto it = r.structured.find(*q_.group_column);
        key = group_key(it == r.structured.end() ? Scalar{} : it->second);
      }
      by_key[key].push_back(r.id);
    }
    std::mt19937_64 rng(derive_seed(q_.seed, 3));
    for (auto& [key, members] : by_key) {
      std::shuffle(members.begin(), members.end(), rng);
      groups_.push_back({key, std::move(members), 0});
    }
    {
      ProgressiveEstimate e = current();
      const Verdict v = judge(e, select_remaining(), true);
      if (v.done) return finish(v, std::move(e));
    }
    for (;;) {
      const std::size_t n = std::min({plan_.batch_size, budget_left(), select_remaining()});
      std::vector<double> weights;
      std::vector<std::size_t> caps;
      for (const auto& g : groups_) {
        weights.push_back(static_cast<double>(g.members.size()));
        caps.push_back(g.members.size() - g.cursor);
      }
      const auto counts = apportion(weights, n, caps);
      std::vector<Draw> draws;
      std::vector<std::size_t> group_of;
      for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
        for (std::size_t j = 0; j < counts[gi]; ++j) {
          draws.push_back({gi, groups_[gi].members[groups_[gi].cursor++]});
          group_of.push_back(gi);
        }
      }
      log_draw(draws, derive_seed(q_.seed, 3), "sample");
      const auto results = label(draws);
      for (std::size_t i = 0; i < draws.size(); ++i) {
        if (!results[i] || !results[i]->valid) continue;
        if (auto v = results[i]->number()) {
          ++valids_;
          auto& mom = group_moments_[groups_[group_of[i]].key];
          mom = update_moments(mom, *v);
        }
      }
      ++iteration_;
      if (emit_and_judge(select_remaining(), true)) return;
    }
  }

  struct Group {
    std::string key;
    std::vector<RecordId> members;
    std::size_t cursor = 0;
  };

  const ExecutablePlan& plan_;
  const QuerySpec& q_;
  const Corpus& corpus_;
  Labeler& labeler_;
  const Emitter& emit_;
  const RunControl& control_;
  RunOptions options_;
  LabelTask task_;
  std::chrono::steady_clock::time_point start_;

  RunLog log_;
  std::optional<EmbeddingMatrix> matrix_;
  std::optional<Stratification> strat_;
  FilterPriorities priorities_;
  RunningMoments moments_;
  std::vector<Group> groups_;
  std::map<std::string, RunningMoments> group_moments_;
  std::optional<ProgressiveEstimate> last_;
  std::size_t sequence_ = 0;
  std::size_t iteration_ = 0;
  std::size_t n_labeled_ = 0;
  std::size_t valids_ = 0;
  bool finished_ = false;
};

}  // namespace

RunLog run(const ExecutablePlan& plan, Labeler& labeler, const Emitter& emit, const RunControl& control,
           const RunOptions& options) {
  return Runner(plan, labeler, emit, control, options).execute();
}

}  // namespace olla
