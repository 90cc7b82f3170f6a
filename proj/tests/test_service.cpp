#include <doctest.h>

#include <filesystem>
#include <thread>

#include "olla/service.hpp"

// After the project headers: resolv.h, pulled in here, defines `_res`.
#include <httplib.h>

using namespace olla;
using nlohmann::json;

namespace {

struct Frame {
  std::string event;
  std::string data;
};

std::vector<Frame> parse_sse(const std::string& body) {
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto end = body.find("\n\n", pos);
    if (end == std::string::npos) break;
    const std::string block = body.substr(pos, end - pos);
    pos = end + 2;
    Frame f;
    std::size_t line_start = 0;
    while (line_start <= block.size()) {
      auto nl = block.find('\n', line_start);
      if (nl == std::string::npos) nl = block.size();
      const std::string line = block.substr(line_start, nl - line_start);
      if (line.rfind("event: ", 0) == 0) f.event = line.substr(7);
      if (line.rfind("data: ", 0) == 0) f.data += line.substr(6);
      line_start = nl + 1;
    }
    out.push_back(f);
  }
  return out;
}

std::shared_ptr<const Corpus> news(std::size_t n) {
  return std::make_shared<const Corpus>(generate_synthetic(n, 3, {0.5, 0.3, 0.2}, {1, 2, 3}, 1.0, 31));
}

ServiceConfig config(std::size_t n, std::chrono::microseconds latency = {}) {
  ServiceConfig c;
  c.corpora.push_back({"news", news(n), nullptr});
  c.embedder = std::make_shared<SyntheticEmbedder>(16, 2);
  c.labeler = [latency](const Corpus& corpus, const LabelTask& task) {
    return oracle_labeler(corpus, task, OracleOptions{0.0, 1, latency, 4});
  };
  return c;
}

const char* kGroupby = R"({"corpus":"news","query_type":"GROUPBY","task":{"kind":"classify"},"seed":3})";

}  // namespace

TEST_CASE("sse framing") {
  CHECK(sse_frame("estimate", "{\"a\":1}") == "event: estimate\ndata: {\"a\":1}\n\n");
  const auto frames = parse_sse(sse_frame("x", "1") + sse_frame("done", "{}"));
  REQUIRE(frames.size() == 2);
  CHECK(frames[1].event == "done");
}

TEST_CASE("broadcast drops a laggard's backlog to the newest item") {
  auto ch = std::make_shared<Broadcast<int>>(2);
  auto slow = Broadcast<int>::subscribe(ch);
  for (int i = 1; i <= 5; ++i) ch->publish(i);
  CHECK(*slow.next(std::chrono::milliseconds(0)) == 5);
  CHECK_FALSE(slow.next(std::chrono::milliseconds(0)));
  CHECK(slow.dropped() == 4);

  auto late = Broadcast<int>::subscribe(ch);
  CHECK(*late.next(std::chrono::milliseconds(0)) == 5);

  ch->publish(6);
  ch->close(7);
  CHECK(*slow.next(std::chrono::milliseconds(0)) == 6);
  CHECK(*slow.next(std::chrono::milliseconds(0)) == 7);
  CHECK(slow.finished());
  ch->publish(8);
  CHECK(*ch->latest() == 7);

  auto after = Broadcast<int>::subscribe(ch);
  CHECK(*after.next(std::chrono::milliseconds(0)) == 7);
  CHECK(after.finished());
}

TEST_CASE("broadcast wakes a waiting subscriber") {
  auto ch = std::make_shared<Broadcast<int>>();
  auto sub = Broadcast<int>::subscribe(ch);
  std::thread producer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    ch->publish(42);
  });
  CHECK(*sub.next(std::chrono::seconds(5)) == 42);
  producer.join();
}

TEST_CASE("corpora listing") {
  Service svc(config(200));
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/corpora");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto j = json::parse(res->body);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["name"] == "news");
  CHECK(j[0]["n_rows"] == 200);
  CHECK(j[0]["has_truth_labels"] == true);
  CHECK(j[0]["columns"] == json::array({"value"}));
}

TEST_CASE("submit and stream a query to completion") {
  Service svc(config(600));
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/queries", kGroupby, "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);
  const auto created = json::parse(res->body);
  const std::string id = created["query_id"];
  CHECK(created["plan"]["N"] == 600);
  CHECK(created["plan"]["K"] == 3);

  std::string body;
  auto stream = cli.Get("/queries/" + id + "/stream", [&](const char* data, std::size_t n) {
    body.append(data, n);
    return true;
  });
  REQUIRE(stream);
  CHECK(stream->status == 200);
  CHECK(stream->get_header_value("Content-Type").find("text/event-stream") == 0);
  const auto frames = parse_sse(body);
  REQUIRE(frames.size() >= 2);
  CHECK(frames.back().event == "done");
  const auto done = json::parse(frames.back().data);
  CHECK(done["query_id"] == id);
  CHECK(done["state"] == "exhausted");

  std::size_t last_seq = 0;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    CHECK(frames[i].event == "estimate");
    const auto e = estimate_from_json(json::parse(frames[i].data));
    CHECK(to_json(e).dump() == nlohmann::ordered_json::parse(frames[i].data).dump());
    if (i > 0) CHECK(e.sequence_no > last_seq);
    last_seq = e.sequence_no;
  }
  const auto final = estimate_from_json(json::parse(frames[frames.size() - 2].data));
  CHECK(final.final);
  CHECK(final.n_labeled == 600);

  svc.find(id)->join();
  auto status = cli.Get("/queries/" + id);
  REQUIRE(status);
  const auto sj = json::parse(status->body);
  CHECK(sj["state"] == "exhausted");
  CHECK(sj["latest"]["final"] == true);
  CHECK(sj["query"]["query_type"] == "GROUPBY");

  // Subscribing after the end replays the final estimate then closes.
  body.clear();
  cli.Get("/queries/" + id + "/stream", [&](const char* data, std::size_t n) {
    body.append(data, n);
    return true;
  });
  const auto replay = parse_sse(body);
  REQUIRE(replay.size() == 2);
  CHECK(estimate_from_json(json::parse(replay[0].data)).final);
  CHECK(replay[1].event == "done");
}

TEST_CASE("stop is graceful and idempotent") {
  Service svc(config(3000, std::chrono::microseconds(2000)));
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/queries", kGroupby, "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);
  const std::string id = json::parse(res->body)["query_id"];
  auto h = svc.find(id);
  auto sub = h->subscribe();
  REQUIRE(sub.next(std::chrono::seconds(30)));

  auto stop = cli.Post("/queries/" + id + "/stop");
  REQUIRE(stop);
  CHECK(stop->status == 200);
  h->join();
  CHECK(h->state() == RunState::stopped);
  const auto last = h->latest();
  REQUIRE(last);
  CHECK(last->final);
  CHECK(last->stop_reason == "stop_requested");
  CHECK(last->n_labeled < 3000);

  stop = cli.Post("/queries/" + id + "/stop");
  REQUIRE(stop);
  CHECK(stop->status == 200);
  CHECK(json::parse(stop->body)["state"] == "stopped");
  CHECK(h->log().state() == RunState::stopped);
}

TEST_CASE("bad requests") {
  Service svc(config(100));
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);

  for (const char* path : {"/queries/nope", "/queries/nope/stream"}) {
    auto res = cli.Get(path);
    REQUIRE(res);
    CHECK(res->status == 404);
  }
  auto res = cli.Post("/queries/nope/stop");
  REQUIRE(res);
  CHECK(res->status == 404);

  res = cli.Post("/queries", R"({"query_type":"SELECT","task":{"kind":"classify","categories":["a","b"]}})",
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  auto j = json::parse(res->body);
  CHECK(j["error"] == "invalid query");
  CHECK(j["fields"][0]["field"] == "task.kind");

  res = cli.Post("/queries", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = cli.Post("/queries", R"({"corpus":"other","query_type":"GROUPBY","task":{"kind":"classify"}})",
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["fields"][0]["field"] == "corpus");

  // Parses, but the plan fails: the corpus has no column "missing".
  res = cli.Post("/queries", R"({"query_type":"WHERE","task":{"kind":"filter","target":"x"},"value_column":"missing"})",
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
}

TEST_CASE("finished runs are saved to the log directory") {
  const auto dir = std::filesystem::temp_directory_path() / "olla_service_logs";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto cfg = config(150);
  cfg.log_dir = dir.string();
  Service svc(cfg);
  auto h = svc.submit(json::parse(kGroupby));
  h->join();
  const auto saved = RunLog::load((dir / (h->id() + ".jsonl")).string());
  CHECK(saved.state() == RunState::exhausted);
  CHECK(saved.emissions().size() == h->log().emissions().size());
  std::filesystem::remove_all(dir);
}
