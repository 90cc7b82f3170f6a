#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "olla/broadcast.hpp"
#include "olla/engine.hpp"

namespace httplib {
class Server;
}

namespace olla {

struct CorpusEntry {
  std::string name;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const EmbeddingMatrix> embeddings;  // optional precomputed rows
};

using LabelerFactory = std::function<std::unique_ptr<Labeler>(const Corpus&, const LabelTask&)>;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  std::vector<CorpusEntry> corpora;
  std::shared_ptr<Embedder> embedder;
  LabelerFactory labeler;  // default: noise-free oracle
  RunOptions run_options;
  std::string log_dir;  // when set, each finished run log is saved as <id>.jsonl
};

/// One submitted query and its engine thread.
class QueryHandle {
 public:
  QueryHandle(std::string id, std::string corpus, ExecutablePlan plan);
  ~QueryHandle();

  const std::string& id() const { return id_; }
  const std::string& corpus() const { return corpus_; }
  const ExecutablePlan& plan() const { return plan_; }
  RunState state() const;
  std::optional<ProgressiveEstimate> latest() const { return channel_->latest(); }
  Broadcast<ProgressiveEstimate>::Subscription subscribe() { return Broadcast<ProgressiveEstimate>::subscribe(channel_); }

  void start(std::unique_ptr<Labeler> labeler, RunOptions options, std::string log_path);
  /// Requests a graceful stop; a no-op once the run has finished.
  void stop() { control_.stop(); }
  void join();
  RunLog log() const;

 private:
  void advance(RunState next);

  std::string id_;
  std::string corpus_;
  ExecutablePlan plan_;
  mutable std::mutex mutex_;
  RunState state_ = RunState::pending;
  RunLog log_;
  RunControl control_;
  std::shared_ptr<Broadcast<ProgressiveEstimate>> channel_;
  std::unique_ptr<Labeler> labeler_;
  std::thread thread_;
};

/// HTTP front end: query submission, SSE estimate streams, stop control.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Blocks until the server stops.
  void wait();
  void shutdown();
  int port() const { return port_; }

  /// Submission without HTTP; throws SpecError or plan errors.
  std::shared_ptr<QueryHandle> submit(const nlohmann::json& body);
  std::shared_ptr<QueryHandle> find(const std::string& id) const;
  nlohmann::ordered_json corpora_json() const;

 private:
  void routes();

  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread listener_;
  int port_ = 0;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<QueryHandle>> queries_;
  std::size_t next_id_ = 1;
};

/// SSE framing of one event.
std::string sse_frame(const std::string& event, const std::string& data);

}  // namespace olla
