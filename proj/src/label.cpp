#include "olla/label.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "olla/error.hpp"
#include "olla/http.hpp"
#include "olla/rng.hpp"

namespace olla {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::classify: return "classify";
    case TaskKind::filter: return "filter";
    case TaskKind::extract: return "extract";
  }
  return "classify";
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "classify") return TaskKind::classify;
  if (name == "filter") return TaskKind::filter;
  if (name == "extract") return TaskKind::extract;
  throw Error(ErrorKind::parameter, "unknown task kind '" + name + "'");
}

void LabelTask::validate() const {
  if (kind == TaskKind::classify) {
    if (categories.size() < 2) throw Error(ErrorKind::parameter, "classify task needs at least two categories");
    std::set<std::string> seen;
    for (const auto& c : categories) {
      if (c.empty()) throw Error(ErrorKind::parameter, "empty category name");
      if (!seen.insert(c).second) throw Error(ErrorKind::parameter, "duplicate category '" + c + "'");
    }
  }
  if (target && kind != TaskKind::filter) throw Error(ErrorKind::parameter, "target applies to filter tasks only");
}

std::string LabelTask::render(const std::string& text) const {
  std::string tmpl = prompt;
  if (tmpl.empty()) {
    switch (kind) {
      case TaskKind::classify: {
        tmpl = "Classify the text into exactly one of these categories:";
        for (std::size_t i = 0; i < categories.size(); ++i) tmpl += (i ? ", " : " ") + categories[i];
        tmpl += ". Answer with the category name only.\n\nText: {text}";
        break;
      }
      case TaskKind::filter:
        tmpl = "Is the text about " + target.value_or("the requested subject") +
               "? Answer yes or no.\n\nText: {text}";
        break;
      case TaskKind::extract:
        tmpl = "Extract the requested number from the text. Answer with the number only.\n\nText: {text}";
        break;
    }
  }
  const std::string slot = "{text}";
  auto pos = tmpl.find(slot);
  if (pos == std::string::npos) return tmpl + "\n\n" + text;
  std::string out;
  std::size_t start = 0;
  for (; pos != std::string::npos; pos = tmpl.find(slot, start)) {
    out.append(tmpl, start, pos - start);
    out += text;
    start = pos + slot.size();
  }
  out.append(tmpl, start);
  return out;
}

const std::string* LabelResult::category() const {
  return outcome ? std::get_if<std::string>(&*outcome) : nullptr;
}

std::optional<bool> LabelResult::boolean() const {
  if (!outcome) return std::nullopt;
  if (const bool* b = std::get_if<bool>(&*outcome)) return *b;
  return std::nullopt;
}

std::optional<double> LabelResult::number() const {
  if (!outcome) return std::nullopt;
  if (const double* d = std::get_if<double>(&*outcome)) return *d;
  return std::nullopt;
}

LabelResult LabelResult::invalid(RecordId id, std::string raw) {
  LabelResult r;
  r.record_id = id;
  r.raw = std::move(raw);
  return r;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_word(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return false;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(haystack[pos - 1]);
    const auto end = pos + needle.size();
    const bool right = end == haystack.size() || !is_word_char(haystack[end]);
    if (left && right) return true;
  }
  return false;
}

std::string trim_answer(std::string_view raw) {
  auto is_trim = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '"' || c == '\'' || c == '`' || c == '!';
  };
  std::size_t b = 0, e = raw.size();
  while (b < e && is_trim(raw[b])) ++b;
  while (e > b && is_trim(raw[e - 1])) --e;
  return std::string(raw.substr(b, e - b));
}

std::optional<double> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::fixed);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::optional<double> first_number(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool digit = std::isdigit(static_cast<unsigned char>(s[i]));
    const bool dot_digit = s[i] == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (!digit && !dot_digit) continue;
    std::size_t b = i;
    if (b > 0 && s[b - 1] == '-') --b;
    std::size_t e = i;
    while (e < s.size() && std::isdigit(static_cast<unsigned char>(s[e]))) ++e;
    if (e < s.size() && s[e] == '.' && e + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[e + 1]))) {
      ++e;
      while (e < s.size() && std::isdigit(static_cast<unsigned char>(s[e]))) ++e;
    } else if (s[i] == '.') {
      ++e;
      while (e < s.size() && std::isdigit(static_cast<unsigned char>(s[e]))) ++e;
    }
    return parse_decimal(s.substr(b, e - b));
  }
  return std::nullopt;
}

}  // namespace

std::optional<Outcome> parse_outcome(std::string_view raw, const LabelTask& task) {
  const std::string text = lower(raw);
  switch (task.kind) {
    case TaskKind::classify: {
      if (task.strict) {
        const std::string answer = lower(trim_answer(raw));
        for (const auto& c : task.categories) {
          if (lower(c) == answer) return Outcome{c};
        }
        return std::nullopt;
      }
      const std::string* match = nullptr;
      for (const auto& c : task.categories) {
        if (!contains_word(text, lower(c))) continue;
        if (match) return std::nullopt;  // ambiguous
        match = &c;
      }
      if (!match) return std::nullopt;
      return Outcome{*match};
    }
    case TaskKind::filter: {
      if (task.strict) {
        const std::string answer = lower(trim_answer(raw));
        if (answer == "yes" || answer == "true") return Outcome{true};
        if (answer == "no" || answer == "false") return Outcome{false};
        return std::nullopt;
      }
      const bool yes = contains_word(text, "yes") || contains_word(text, "true");
      const bool no = contains_word(text, "no") || contains_word(text, "false");
      if (yes == no) return std::nullopt;
      return Outcome{yes};
    }
    case TaskKind::extract: {
      std::optional<double> v = task.strict ? parse_decimal(trim_answer(raw)) : first_number(raw);
      if (!v) return std::nullopt;
      return Outcome{*v};
    }
  }
  return std::nullopt;
}

OracleLabeler::OracleLabeler(OracleOptions options) : options_(options) {
  if (!(options_.noise_rate >= 0.0 && options_.noise_rate <= 1.0)) {
    throw Error(ErrorKind::parameter, "noise rate outside [0, 1]");
  }
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

bool OracleLabeler::flips(RecordId id) const {
  return unit_double(derive_seed(options_.seed, id)) < options_.noise_rate;
}

void OracleLabeler::check(const Corpus& corpus, const LabelTask& task) const {
  for (const auto& r : corpus.records) {
    const bool ok = task.kind == TaskKind::extract ? r.truth_value.has_value() : r.truth_label.has_value();
    if (!ok) {
      throw Error(ErrorKind::capability, std::string("record ") + std::to_string(r.id) + " has no truth " +
                                             (task.kind == TaskKind::extract ? "value" : "label") +
                                             " for the oracle labeler");
    }
  }
}

LabelResult OracleLabeler::label(const Record& record, const LabelTask& task) {
  const auto start = std::chrono::steady_clock::now();
  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
  LabelResult result;
  result.record_id = record.id;
  const bool flip = flips(record.id);
  switch (task.kind) {
    case TaskKind::classify: {
      if (!record.truth_label) throw Error(ErrorKind::capability, "record " + std::to_string(record.id) + " lacks a truth label");
      const std::string& truth = *record.truth_label;
      std::string answer = truth;
      if (flip) {
        std::vector<const std::string*> others;
        for (const auto& c : task.categories) {
          if (c != truth) others.push_back(&c);
        }
        if (!others.empty()) {
          answer = *others[derive_seed(options_.seed ^ 0xf11bULL, record.id) % others.size()];
        }
      }
      result.raw = answer;
      if (std::find(task.categories.begin(), task.categories.end(), answer) != task.categories.end()) {
        result.outcome = answer;
        result.valid = true;
      }
      break;
    }
    case TaskKind::filter: {
      if (!record.truth_label) throw Error(ErrorKind::capability, "record " + std::to_string(record.id) + " lacks a truth label");
      std::optional<bool> truth;
      if (task.target) {
        truth = *record.truth_label == *task.target;
      } else {
        LabelTask strict_filter{TaskKind::filter, {}, std::nullopt, "", true};
        if (auto o = parse_outcome(*record.truth_label, strict_filter)) truth = std::get<bool>(*o);
      }
      if (!truth) throw Error(ErrorKind::capability, "truth label '" + *record.truth_label + "' is not boolean");
      const bool answer = flip ? !*truth : *truth;
      result.raw = answer ? "true" : "false";
      result.outcome = answer;
      result.valid = true;
      break;
    }
    case TaskKind::extract: {
      if (!record.truth_value) throw Error(ErrorKind::capability, "record " + std::to_string(record.id) + " lacks a truth value");
      result.outcome = *record.truth_value;
      result.raw = nlohmann::json(*record.truth_value).dump();
      result.valid = true;
      break;
    }
  }
  result.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return result;
}

std::unique_ptr<Labeler> oracle_labeler(const Corpus& corpus, const LabelTask& task, OracleOptions options) {
  auto labeler = std::make_unique<OracleLabeler>(options);
  labeler->check(corpus, task);
  return labeler;
}

LlmConfig LlmConfig::from_env() {
  LlmConfig c;
  if (const char* v = std::getenv("OLLA_LLM_URL")) c.url = v;
  if (const char* v = std::getenv("OLLA_LLM_MODEL")) c.model = v;
  if (const char* v = std::getenv("OLLA_LLM_KEY")) c.api_key = v;
  return c;
}

LlmLabeler::LlmLabeler(LlmConfig config) : config_(std::move(config)) {
  http::parse_endpoint(config_.url);
  if (config_.max_in_flight == 0) throw Error(ErrorKind::parameter, "max_in_flight must be positive");
}

std::string LlmLabeler::request_body(const std::string& model, const std::string& prompt) {
  nlohmann::json body = {{"model", model},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                         {"temperature", 0}};
  return body.dump();
}

std::optional<std::string> LlmLabeler::reply_text(const std::string& response_body) {
  try {
    const auto j = nlohmann::json::parse(response_body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) return std::nullopt;
    return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

LabelResult LlmLabeler::label(const Record& record, const LabelTask& task) {
  const auto start = std::chrono::steady_clock::now();
  const auto endpoint = http::parse_endpoint(config_.url);
  const std::string body = request_body(config_.model, task.render(record.text));
  http::Response response;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    response = http::post_json(endpoint, body, config_.api_key, config_.timeout);
    if (response.ok() || !response.transient() || attempt >= config_.retries) break;
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  if (!response.ok()) {
    throw Error(ErrorKind::transport, "chat request for record " + std::to_string(record.id) + " failed: status " +
                                          std::to_string(response.status) + " " + response.error);
  }
  LabelResult result;
  result.record_id = record.id;
  const auto text = reply_text(response.body);
  result.raw = text.value_or(response.body);
  if (text) {
    result.outcome = parse_outcome(*text, task);
    result.valid = result.outcome.has_value();
  }
  result.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return result;
}

std::size_t label_concurrently(Labeler& labeler, const Corpus& corpus, const LabelTask& task,
                               std::span<const RecordId> ids,
                               const std::function<void(std::size_t, LabelResult)>& on_complete,
                               const std::atomic<bool>* cancel) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mutex;
  std::exception_ptr failure;
  std::size_t completed = 0;

  auto attempt = [&](RecordId id) -> std::optional<LabelResult> {
    const Record& record = corpus.records.at(id);
    for (int tries = 0;; ++tries) {
      try {
        return labeler.label(record, task);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::transport) throw;
        if (tries >= 1) return LabelResult::invalid(id, e.what());
      }
    }
  };

  auto worker = [&] {
    while (!abort.load() && !(cancel && cancel->load())) {
      const std::size_t i = next.fetch_add(1);
      if (i >= ids.size()) return;
      std::optional<LabelResult> result;
      try {
        result = attempt(ids[i]);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        abort.store(true);
        return;
      }
      std::lock_guard lock(mutex);
      on_complete(i, std::move(*result));
      ++completed;
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(1, labeler.max_in_flight()), ids.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return completed;
}

}  // namespace olla
