#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "olla/corpus.hpp"
#include "olla/embedding.hpp"
#include "olla/label.hpp"
#include "olla/query.hpp"

namespace olla {

enum class RunState { pending, running, converged, stopped, aborted, exhausted };

const char* to_string(RunState s);
RunState parse_run_state(const std::string& name);
bool is_terminal(RunState s);

/// One emission of the running answer.
struct ProgressiveEstimate {
  std::size_t sequence_no = 0;
  double elapsed = 0.0;  // seconds
  std::size_t iteration = 0;
  std::size_t n_labeled = 0;
  std::size_t cumulative_valids = 0;
  AggregateValue estimate;
  AggregateValue halfwidth;  // keys absent while warming up
  bool converged = false;
  bool final = false;
  RunState state = RunState::running;
  std::string stop_reason;
  std::size_t strata = 0;
  double max_normalized_variance = 0.0;

  /// Largest half-width over all keys; nullopt while any key is warming up.
  std::optional<double> max_halfwidth() const;

  bool operator==(const ProgressiveEstimate&) const = default;
};

nlohmann::ordered_json to_json(const ProgressiveEstimate& e);
ProgressiveEstimate estimate_from_json(const nlohmann::json& j);

struct PlanOptions {
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<const EmbeddingMatrix> embeddings;  // precomputed, one row per record
};

struct ExecutablePlan {
  QuerySpec query;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<const EmbeddingMatrix> embeddings;
  std::vector<std::string> stages;
  std::vector<std::string> categories;  // classify categories (GROUPBY)
  std::size_t n = 0;
  std::size_t h0 = 1;
  std::size_t hmax = 1;
  std::size_t batch_size = 1;
  std::size_t probe_size = 0;

  bool has_stage(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

/// Validates `query` against `corpus` and fixes every derived parameter.
/// Throws a plan error on inconsistencies.
ExecutablePlan plan(const QuerySpec& query, std::shared_ptr<const Corpus> corpus, const PlanOptions& options = {});
/// Non-owning variant; `corpus` must outlive the plan.
ExecutablePlan plan(const QuerySpec& query, const Corpus& corpus, const PlanOptions& options = {});

/// Cooperative stop flag shared with a running query.
class RunControl {
 public:
  void stop() { flag_.store(true); }
  bool stop_requested() const { return flag_.load(); }
  const std::atomic<bool>* flag() const { return &flag_; }

 private:
  std::atomic<bool> flag_{false};
};

struct RunOptions {
  /// When set, elapsed time is n_labeled times this many seconds instead of
  /// wall-clock time, which makes run logs reproducible byte for byte.
  std::optional<double> seconds_per_call;
  bool log_labels = true;
};

using Emitter = std::function<void(const ProgressiveEstimate&)>;

/// Ordered record of a run: JSONL events typed by an "event" field.
struct RunLog {
  std::vector<nlohmann::ordered_json> events;

  void write(std::ostream& out) const;
  void save(const std::string& path) const;
  static RunLog read(std::istream& in);
  static RunLog load(const std::string& path);

  std::vector<ProgressiveEstimate> emissions() const;
  /// Final state from the "end" event; running if absent.
  RunState state() const;
  std::optional<nlohmann::ordered_json> first(const std::string& event) const;
};

/// Runs the plan to a stop condition. Never throws for runtime failures: a
/// labeler error ends the run with an aborted final emission.
RunLog run(const ExecutablePlan& plan, Labeler& labeler, const Emitter& emit, const RunControl& control,
           const RunOptions& options = {});

}  // namespace olla
