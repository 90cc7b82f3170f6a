#include "olla/service.hpp"

#include <chrono>

#include <httplib.h>

namespace olla {

std::string sse_frame(const std::string& event, const std::string& data) {
  return "event: " + event + "\ndata: " + data + "\n\n";
}

QueryHandle::QueryHandle(std::string id, std::string corpus, ExecutablePlan plan)
    : id_(std::move(id)),
      corpus_(std::move(corpus)),
      plan_(std::move(plan)),
      channel_(std::make_shared<Broadcast<ProgressiveEstimate>>()) {}

QueryHandle::~QueryHandle() {
  stop();
  join();
}

RunState QueryHandle::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

void QueryHandle::advance(RunState next) {
  std::lock_guard lock(mutex_);
  if (is_terminal(state_)) return;
  if (next == RunState::pending) return;
  if (next == RunState::running && state_ != RunState::pending) return;
  state_ = next;
}

void QueryHandle::start(std::unique_ptr<Labeler> labeler, RunOptions options, std::string log_path) {
  labeler_ = std::move(labeler);
  thread_ = std::thread([this, options, log_path] {
    advance(RunState::running);
    RunLog log;
    try {
      log = run(
          plan_, *labeler_,
          [this](const ProgressiveEstimate& e) {
            if (e.final) advance(e.state);
            channel_->publish(e);
          },
          control_, options);
      if (!log_path.empty()) log.save(log_path);
    } catch (const std::exception&) {
      advance(RunState::aborted);
    }
    {
      std::lock_guard lock(mutex_);
      log_ = std::move(log);
    }
    advance(RunState::aborted);  // no-op unless the run ended without a final emission
    channel_->close();
  });
}

void QueryHandle::join() {
  if (thread_.joinable()) thread_.join();
}

RunLog QueryHandle::log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

Service::Service(ServiceConfig config) : config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  if (!config_.labeler) {
    config_.labeler = [](const Corpus& corpus, const LabelTask& task) { return oracle_labeler(corpus, task); };
  }
}

Service::~Service() { shutdown(); }

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

nlohmann::ordered_json error_body(const std::string& message, const std::string& field = "") {
  nlohmann::ordered_json fields = nlohmann::ordered_json::array();
  if (!field.empty()) fields.push_back({{"field", field}, {"message", message}});
  return {{"error", message}, {"fields", std::move(fields)}};
}

nlohmann::ordered_json handle_json(const QueryHandle& h) {
  return {{"query_id", h.id()}, {"state", to_string(h.state())}, {"corpus", h.corpus()}};
}

}  // namespace

std::shared_ptr<QueryHandle> Service::submit(const nlohmann::json& body_in) {
  nlohmann::json body = body_in;
  std::string corpus_name;
  if (body.is_object() && body.contains("corpus")) {
    if (!body["corpus"].is_string()) throw SpecError(std::vector<FieldError>{{"corpus", "must be a string"}});
    corpus_name = body["corpus"].get<std::string>();
    body.erase("corpus");
  }
  const QuerySpec query = parse_query(body);
  const CorpusEntry* entry = nullptr;
  for (const auto& c : config_.corpora) {
    if (corpus_name.empty() || c.name == corpus_name) {
      entry = &c;
      break;
    }
  }
  if (!entry) throw SpecError(std::vector<FieldError>{{"corpus", "unknown corpus '" + corpus_name + "'"}});

  ExecutablePlan p = plan(query, entry->corpus, PlanOptions{config_.embedder, entry->embeddings});
  auto labeler = config_.labeler(*entry->corpus, p.query.task);

  std::shared_ptr<QueryHandle> handle;
  {
    std::lock_guard lock(mutex_);
    const std::string id = "q" + std::to_string(next_id_++);
    handle = std::make_shared<QueryHandle>(id, entry->name, std::move(p));
    queries_[id] = handle;
  }
  const std::string log_path = config_.log_dir.empty() ? "" : config_.log_dir + "/" + handle->id() + ".jsonl";
  handle->start(std::move(labeler), config_.run_options, log_path);
  return handle;
}

std::shared_ptr<QueryHandle> Service::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = queries_.find(id);
  return it == queries_.end() ? nullptr : it->second;
}

nlohmann::ordered_json Service::corpora_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& c : config_.corpora) {
    nlohmann::ordered_json columns = nlohmann::ordered_json::array();
    for (const auto& col : c.corpus->schema) columns.push_back(col.name);
    bool truth = !c.corpus->records.empty() && c.corpus->records.front().truth_label.has_value();
    out.push_back({{"name", c.name},
                   {"n_rows", c.corpus->n_rows()},
                   {"columns", std::move(columns)},
                   {"has_truth_labels", truth},
                   {"has_embeddings", c.embeddings != nullptr}});
  }
  return out;
}

void Service::routes() {
  auto& svr = *server_;

  svr.Post("/queries", [this](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      return send_json(res, 400, error_body(std::string("malformed JSON: ") + e.what(), "body"));
    }
    try {
      auto h = submit(body);
      auto out = handle_json(*h);
      out["plan"] = h->plan().to_json();
      send_json(res, 201, out);
    } catch (const SpecError& e) {
      send_json(res, 400, e.to_json());
    } catch (const Error& e) {
      send_json(res, 400, error_body(e.what(), "query"));
    }
  });

  svr.Get(R"(/queries/([^/]+)/stream)", [this](const httplib::Request& req, httplib::Response& res) {
    auto h = find(req.matches[1]);
    if (!h) return send_json(res, 404, error_body("unknown query id"));
    auto sub = std::make_shared<Broadcast<ProgressiveEstimate>::Subscription>(h->subscribe());
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [sub, h](std::size_t, httplib::DataSink& sink) {
      auto done = [&](RunState state, const std::string& reason) {
        const nlohmann::ordered_json d = {{"query_id", h->id()}, {"state", to_string(state)}, {"stop_reason", reason}};
        const std::string frame = sse_frame("done", d.dump());
        sink.write(frame.data(), frame.size());
        sink.done();
        return true;
      };
      if (auto item = sub->next(std::chrono::milliseconds(200))) {
        const std::string frame = sse_frame("estimate", to_json(*item).dump());
        if (!sink.write(frame.data(), frame.size())) return false;
        if (item->final) return done(item->state, item->stop_reason);
        return true;
      }
      if (sub->finished()) return done(h->state(), "");
      return sink.is_writable();
    });
  });

  svr.Post(R"(/queries/([^/]+)/stop)", [this](const httplib::Request& req, httplib::Response& res) {
    auto h = find(req.matches[1]);
    if (!h) return send_json(res, 404, error_body("unknown query id"));
    h->stop();
    send_json(res, 200, handle_json(*h));
  });

  svr.Get(R"(/queries/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto h = find(req.matches[1]);
    if (!h) return send_json(res, 404, error_body("unknown query id"));
    auto out = handle_json(*h);
    out["query"] = to_json(h->plan().query);
    auto latest = h->latest();
    out["latest"] = latest ? to_json(*latest) : nlohmann::ordered_json(nullptr);
    send_json(res, 200, out);
  });

  svr.Get("/corpora", [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, corpora_json()); });
}

int Service::start() {
  routes();
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
  } else {
    port_ = server_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ <= 0) throw Error(ErrorKind::parameter, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Service::wait() {
  if (listener_.joinable()) listener_.join();
}

void Service::shutdown() {
  std::map<std::string, std::shared_ptr<QueryHandle>> queries;
  {
    std::lock_guard lock(mutex_);
    queries = queries_;
  }
  for (auto& [id, h] : queries) h->stop();
  for (auto& [id, h] : queries) h->join();
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
}

}  // namespace olla
