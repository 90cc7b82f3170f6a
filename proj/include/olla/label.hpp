#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "olla/corpus.hpp"
#include "olla/error.hpp"

namespace olla {

enum class TaskKind { classify, filter, extract };

const char* to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

/// What the labeler is asked to produce for each record.
struct LabelTask {
  TaskKind kind = TaskKind::classify;
  std::vector<std::string> categories;  // classify
  std::optional<std::string> target;    // filter: predicate holds when the truth label equals this
  std::string prompt;                   // instruction template with a {text} slot
  bool strict = false;                  // parse the whole reply rather than scanning it

  /// Throws a parameter error when the task is not well formed.
  void validate() const;
  std::string render(const std::string& text) const;

  bool operator==(const LabelTask&) const = default;
};

using Outcome = std::variant<std::string, bool, double>;

struct LabelResult {
  RecordId record_id = 0;
  std::optional<Outcome> outcome;  // absent iff !valid
  bool valid = false;
  std::string raw;
  std::chrono::microseconds latency{0};

  const std::string* category() const;
  std::optional<bool> boolean() const;
  std::optional<double> number() const;

  static LabelResult invalid(RecordId id, std::string raw);
};

/// Lenient reply parser: a case-insensitive whole-word scan for exactly one
/// category, a yes/true versus no/false token, or the first decimal number.
/// With `task.strict` the trimmed reply must consist of the answer alone.
std::optional<Outcome> parse_outcome(std::string_view raw, const LabelTask& task);

class Labeler {
 public:
  virtual ~Labeler() = default;
  /// Must be safe to call concurrently from up to `max_in_flight()` threads.
  virtual LabelResult label(const Record& record, const LabelTask& task) = 0;
  virtual std::size_t max_in_flight() const { return 1; }
  /// Throws a capability error when the labeler cannot serve `task` on `corpus`.
  virtual void check(const Corpus&, const LabelTask&) const {}
};

struct OracleOptions {
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  std::chrono::microseconds latency{0};  // simulated per-call delay
  std::size_t max_in_flight = 1;
};

/// Ground-truth labeler. Classify and filter outcomes are flipped to a
/// uniformly chosen wrong answer with probability `noise_rate`; the flip
/// decision depends only on (seed, record id), so results do not depend on
/// call order.
class OracleLabeler final : public Labeler {
 public:
  explicit OracleLabeler(OracleOptions options = {});

  LabelResult label(const Record& record, const LabelTask& task) override;
  std::size_t max_in_flight() const override { return options_.max_in_flight; }
  void check(const Corpus& corpus, const LabelTask& task) const override;

  /// Whether the noise draw flips `id`.
  bool flips(RecordId id) const;

 private:
  OracleOptions options_;
};

std::unique_ptr<Labeler> oracle_labeler(const Corpus& corpus, const LabelTask& task, OracleOptions options = {});

struct LlmConfig {
  std::string url;  // full chat-completions endpoint
  std::string model;
  std::string api_key;
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::chrono::milliseconds initial_backoff{250};

  /// Reads OLLA_LLM_URL, OLLA_LLM_MODEL and OLLA_LLM_KEY.
  static LlmConfig from_env();
};

/// Chat-completions client: one request per record, temperature 0. Replies
/// that do not parse come back as invalid results; transport failures that
/// survive the retries raise transport errors.
class LlmLabeler final : public Labeler {
 public:
  explicit LlmLabeler(LlmConfig config);

  LabelResult label(const Record& record, const LabelTask& task) override;
  std::size_t max_in_flight() const override { return config_.max_in_flight; }

  static std::string request_body(const std::string& model, const std::string& prompt);
  /// Content of the first choice's message; nullopt when the shape is wrong.
  static std::optional<std::string> reply_text(const std::string& response_body);

 private:
  LlmConfig config_;
};

/// Labels `ids` with at most `labeler.max_in_flight()` concurrent calls.
/// `on_complete(index, result)` is invoked once per record, serialized, in
/// completion order. A transport failure re-queues the record once and then
/// yields an invalid result. Other labeler exceptions stop dispatch and are
/// rethrown after in-flight calls drain. When `cancel` becomes true no new
/// calls start. Returns the number of completed records.
std::size_t label_concurrently(Labeler& labeler, const Corpus& corpus, const LabelTask& task,
                               std::span<const RecordId> ids,
                               const std::function<void(std::size_t, LabelResult)>& on_complete,
                               const std::atomic<bool>* cancel = nullptr);

}  // namespace olla
