#include <doctest.h>

#include <atomic>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "olla/label.hpp"

using namespace olla;

namespace {

LabelTask classify(std::vector<std::string> cats) {
  LabelTask t;
  t.kind = TaskKind::classify;
  t.categories = std::move(cats);
  return t;
}

LabelTask filter(std::string target) {
  LabelTask t;
  t.kind = TaskKind::filter;
  t.target = std::move(target);
  return t;
}

LabelTask extract() {
  LabelTask t;
  t.kind = TaskKind::extract;
  return t;
}

Corpus labelled(std::size_t n, std::size_t k) {
  std::vector<double> w(k, 1.0 / k), means(k, 1.0);
  return generate_synthetic(n, k, w, means, 1.0, 13);
}

// Chat-completions stand-in: replies with `reply(prompt)`, failing the first
// `failures` calls with 503.
struct MockChat {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  std::atomic<int> failures{0};
  std::function<std::string(const std::string&)> reply;
  std::mutex mutex;
  nlohmann::json last_request;

  MockChat() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      {
        std::lock_guard lock(mutex);
        last_request = nlohmann::json::parse(req.body);
      }
      if (failures > 0) {
        --failures;
        res.status = 503;
        return;
      }
      const auto prompt = nlohmann::json::parse(req.body)["messages"][0]["content"].get<std::string>();
      nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", reply(prompt)}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockChat() {
    server.stop();
    thread.join();
  }
  LlmConfig config() const {
    LlmConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    c.model = "test-model";
    c.initial_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(5000);
    return c;
  }
};

}  // namespace

TEST_CASE("classify parsing") {
  const auto t = classify({"sports", "tech"});
  CHECK(std::get<std::string>(*parse_outcome("sports", t)) == "sports");
  CHECK(std::get<std::string>(*parse_outcome("I think it is Sports.", t)) == "sports");
  CHECK_FALSE(parse_outcome("banana", t));
  CHECK_FALSE(parse_outcome("sports and tech", t));
  CHECK_FALSE(parse_outcome("esports", t));
  CHECK(std::get<std::string>(*parse_outcome("tech, tech, TECH", t)) == "tech");
}

TEST_CASE("filter parsing") {
  const auto t = filter("x");
  CHECK(std::get<bool>(*parse_outcome("TRUE", t)) == true);
  CHECK(std::get<bool>(*parse_outcome("No.", t)) == false);
  CHECK(std::get<bool>(*parse_outcome("Yes, it does", t)) == true);
  CHECK_FALSE(parse_outcome("yes and no", t));
  CHECK_FALSE(parse_outcome("maybe", t));
}

TEST_CASE("extract parsing") {
  const auto t = extract();
  CHECK(std::get<double>(*parse_outcome("total: 42.5 USD", t)) == 42.5);
  CHECK(std::get<double>(*parse_outcome("-3 then 7", t)) == -3.0);
  CHECK_FALSE(parse_outcome("no number here", t));
}

TEST_CASE("strict parsing wants the bare answer") {
  auto t = classify({"sports", "tech"});
  t.strict = true;
  CHECK(parse_outcome("  Sports \n", t));
  CHECK_FALSE(parse_outcome("It is sports", t));
  auto e = extract();
  e.strict = true;
  CHECK(std::get<double>(*parse_outcome("12.5", e)) == 12.5);
  CHECK_FALSE(parse_outcome("12.5 USD", e));
}

TEST_CASE("task validation and rendering") {
  CHECK_THROWS_AS(classify({"only"}).validate(), olla::Error);
  CHECK_NOTHROW(classify({"a", "b"}).validate());
  auto t = classify({"a", "b"});
  t.prompt = "Label: {text} now";
  CHECK(t.render("hello") == "Label: hello now");
  t.prompt = "No slot.";
  CHECK(t.render("hello").find("hello") != std::string::npos);
  CHECK(filter("x").render("body").find("body") != std::string::npos);
}

TEST_CASE("oracle without noise returns the truth") {
  const Corpus c = labelled(200, 3);
  auto cls = classify({synthetic_category_name(0), synthetic_category_name(1), synthetic_category_name(2)});
  auto lab = oracle_labeler(c, cls);
  auto fil = filter(synthetic_category_name(1));
  auto ext = extract();
  for (const auto& r : c.records) {
    auto res = lab->label(r, cls);
    REQUIRE(res.valid);
    CHECK(*res.category() == *r.truth_label);
    CHECK(*lab->label(r, fil).boolean() == (*r.truth_label == synthetic_category_name(1)));
    CHECK(*lab->label(r, ext).number() == *r.truth_value);
  }
}

TEST_CASE("oracle with full noise flips every filter outcome") {
  const Corpus c = labelled(100, 2);
  auto fil = filter(synthetic_category_name(0));
  auto lab = oracle_labeler(c, fil, OracleOptions{1.0, 4});
  for (const auto& r : c.records) CHECK(*lab->label(r, fil).boolean() == (*r.truth_label != synthetic_category_name(0)));

  auto cls = classify({synthetic_category_name(0), synthetic_category_name(1)});
  for (const auto& r : c.records) CHECK(*lab->label(r, cls).category() != *r.truth_label);
}

TEST_CASE("oracle noise rate is honoured") {
  const Corpus c = labelled(10000, 4);
  auto cls = classify({synthetic_category_name(0), synthetic_category_name(1), synthetic_category_name(2),
                       synthetic_category_name(3)});
  auto lab = oracle_labeler(c, cls, OracleOptions{0.1, 77});
  std::size_t wrong = 0;
  std::map<std::string, std::size_t> wrong_to;
  for (const auto& r : c.records) {
    const auto res = lab->label(r, cls);
    if (*res.category() != *r.truth_label) {
      ++wrong;
      ++wrong_to[*res.category()];
    }
  }
  CHECK(std::abs(wrong / 10000.0 - 0.1) <= 0.01);
  CHECK(wrong_to.size() == 4);
}

TEST_CASE("oracle needs truth") {
  Corpus c = labelled(5, 2);
  for (auto& r : c.records) r.truth_value.reset();
  try {
    oracle_labeler(c, extract());
    FAIL("expected a capability error");
  } catch (const olla::Error& e) {
    CHECK(e.kind() == ErrorKind::capability);
  }
}

TEST_CASE("chat wire shape") {
  const auto body = nlohmann::json::parse(LlmLabeler::request_body("m", "hi"));
  CHECK(body["model"] == "m");
  CHECK(body["temperature"] == 0);
  CHECK(body["messages"][0]["role"] == "user");
  CHECK(body["messages"][0]["content"] == "hi");
  CHECK(LlmLabeler::reply_text(R"({"choices":[{"message":{"content":"yes"}}]})") == "yes");
  CHECK_FALSE(LlmLabeler::reply_text(R"({"nope":1})"));
  CHECK_FALSE(LlmLabeler::reply_text("not json"));
}

TEST_CASE("llm labeler against a local endpoint") {
  MockChat mock;
  mock.reply = [](const std::string& prompt) {
    return prompt.find("#sports") != std::string::npos ? "I think it is Sports." : "banana";
  };
  LlmLabeler lab(mock.config());
  const auto t = classify({"sports", "tech"});
  Record r;
  r.text = "a note about #sports";
  auto res = lab.label(r, t);
  CHECK(res.valid);
  CHECK(*res.category() == "sports");
  CHECK(res.raw == "I think it is Sports.");
  CHECK(mock.last_request["model"] == "test-model");

  r.text = "something else";
  res = lab.label(r, t);
  CHECK_FALSE(res.valid);
  CHECK(res.raw == "banana");

  mock.failures = 2;
  r.text = "#sports again";
  CHECK(lab.label(r, t).valid);

  mock.failures = 10;
  try {
    lab.label(r, t);
    FAIL("expected a transport error");
  } catch (const olla::Error& e) {
    CHECK(e.kind() == ErrorKind::transport);
  }
}

TEST_CASE("concurrent labelling calls back once per record") {
  const Corpus c = labelled(300, 3);
  auto t = classify({synthetic_category_name(0), synthetic_category_name(1), synthetic_category_name(2)});
  auto lab = oracle_labeler(c, t, OracleOptions{0.0, 1, std::chrono::microseconds(50), 8});
  std::vector<RecordId> ids;
  for (RecordId i = 0; i < 300; i += 2) ids.push_back(i);
  std::set<std::size_t> seen;
  std::size_t valid = 0;
  const auto done = label_concurrently(*lab, c, t, ids, [&](std::size_t index, LabelResult r) {
    CHECK(seen.insert(index).second);
    CHECK(r.record_id == ids[index]);
    valid += r.valid;
  });
  CHECK(done == ids.size());
  CHECK(seen.size() == ids.size());
  CHECK(valid == ids.size());
}

namespace {

class Flaky final : public Labeler {
 public:
  std::atomic<int> calls{0};
  LabelResult label(const Record& record, const LabelTask&) override {
    ++calls;
    if (record.id == 3) throw Error(ErrorKind::transport, "down");
    if (record.id == 7) throw std::logic_error("broken");
    LabelResult r;
    r.record_id = record.id;
    r.valid = true;
    r.outcome = true;
    return r;
  }
  std::size_t max_in_flight() const override { return 4; }
};

}  // namespace

TEST_CASE("transport failures retry once then count as invalid") {
  const Corpus c = labelled(6, 2);
  Flaky lab;
  std::vector<RecordId> ids{0, 1, 2, 3, 4, 5};
  std::map<RecordId, bool> valid;
  label_concurrently(lab, c, filter("x"), ids, [&](std::size_t i, LabelResult r) { valid[ids[i]] = r.valid; });
  CHECK(valid.size() == 6);
  CHECK_FALSE(valid[3]);
  CHECK(valid[0]);
  CHECK(lab.calls == 7);
}

TEST_CASE("other labeler failures propagate") {
  const Corpus c = labelled(10, 2);
  Flaky lab;
  std::vector<RecordId> ids{7, 0, 1};
  CHECK_THROWS_AS(label_concurrently(lab, c, filter("x"), ids, [](std::size_t, LabelResult) {}), std::logic_error);
}

TEST_CASE("cancellation stops dispatch") {
  const Corpus c = labelled(50, 2);
  auto t = filter(synthetic_category_name(0));
  auto lab = oracle_labeler(c, t);
  std::vector<RecordId> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  std::atomic<bool> cancel{false};
  std::size_t n = 0;
  const auto done = label_concurrently(*lab, c, t, ids, [&](std::size_t, LabelResult) {
    if (++n == 5) cancel = true;
  }, &cancel);
  CHECK(done == 5);
}
