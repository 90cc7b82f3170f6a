#include "commands.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "olla/corpus.hpp"
#include "olla/embedding.hpp"
#include "olla/engine.hpp"
#include "olla/label.hpp"
#include "olla/query.hpp"
#include "olla/report.hpp"
#include "olla/service.hpp"

namespace olla::cli {

namespace {

bool bad_input(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema:
    case ErrorKind::row:
    case ErrorKind::parameter:
    case ErrorKind::plan:
    case ErrorKind::capability:
      return true;
    default:
      return false;
  }
}

// Loads a corpus, picking up truth_label/truth_value columns when present.
Corpus load_any(const std::string& path, const std::string& text_column) {
  const auto format = format_from_extension(path);
  LoadOptions options;
  options.text_column = text_column;
  Corpus probe = load_corpus(path, format, options);
  if (probe.has_column(kTruthLabelColumn)) options.truth_label_column = kTruthLabelColumn;
  if (probe.has_column(kTruthValueColumn)) options.truth_value_column = kTruthValueColumn;
  if (!options.truth_label_column && !options.truth_value_column) return probe;
  return load_corpus(path, format, options);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parameter, "cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parameter, "config '" + path + "' is not valid JSON: " + e.what());
  }
}

std::shared_ptr<Embedder> make_embedder(std::size_t dim) {
  auto remote = RemoteEmbedderConfig::from_env();
  if (!remote.url.empty()) return std::make_shared<RemoteEmbedder>(remote);
  return std::make_shared<SyntheticEmbedder>(dim, 0x0e11a);
}

std::unique_ptr<Labeler> make_labeler(const std::string& kind, double noise, const Corpus& corpus,
                                      const LabelTask& task) {
  if (kind == "oracle") return oracle_labeler(corpus, task, OracleOptions{noise, 0x1abe1, {}, 1});
  if (kind == "llm") {
    auto config = LlmConfig::from_env();
    if (config.url.empty()) throw Error(ErrorKind::capability, "OLLA_LLM_URL is not set");
    return std::make_unique<LlmLabeler>(config);
  }
  throw Error(ErrorKind::parameter, "unknown labeler '" + kind + "' (expected oracle or llm)");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const SpecError& e) {
    err << "olla: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "olla: " << e.what() << "\n";
    return bad_input(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "olla: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    QuerySpec query = parse_query(read_json_file(args.config));
    if (args.seed) query.seed = *args.seed;
    if (args.policy) query.policy = parse_policy(*args.policy);
    auto corpus = std::make_shared<const Corpus>(load_any(args.common.corpus, args.common.text_column));
    const auto p = plan(query, corpus, PlanOptions{make_embedder(args.common.embed_dim), nullptr});
    auto labeler = make_labeler(args.common.labeler, args.common.noise, *corpus, p.query.task);

    RunControl control;
    RunOptions options;
    options.seconds_per_call = args.common.seconds_per_call;
    const RunLog log = run(
        p, *labeler,
        [&](const ProgressiveEstimate& e) {
          if (!args.quiet) out << to_json(e).dump() << "\n" << std::flush;
        },
        control, options);
    if (!args.out.empty()) log.save(args.out);
    if (log.state() == RunState::aborted) {
      const auto end = log.first("end");
      err << "olla: run aborted: " << (end ? end->value("stop_reason", std::string()) : std::string()) << "\n";
      return 1;
    }
    return 0;
  });
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto report = convergence_report(RunLog::load(args.log));
    if (args.json) out << report.to_json().dump(2) << "\n";
    else out << report.render();
    return 0;
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.out.empty()) throw Error(ErrorKind::parameter, "--out is required");
    Corpus corpus;
    if (args.preset == "labels") {
      SyntheticSpec spec;
      spec.n = args.n;
      spec.k_categories = args.k;
      spec.category_weights.assign(args.k, 1.0 / static_cast<double>(args.k));
      for (std::size_t i = 0; i < args.k; ++i) spec.value_means.push_back(10.0 * static_cast<double>(i + 1));
      spec.value_stddev = args.value_stddev;
      spec.seed = args.seed;
      spec.contamination = args.contamination;
      corpus = generate_synthetic(spec);
    } else if (args.preset == "filter") {
      // Ten topics; the "match" label lives in two of them at rate one half.
      MixtureSpec spec;
      spec.n = args.n;
      spec.seed = args.seed;
      spec.value_stddev = args.value_stddev;
      spec.value_means = {{"match", 100.0}, {"other", 50.0}};
      for (std::size_t t = 0; t < 10; ++t) {
        TopicSpec topic;
        topic.name = synthetic_category_name(t);
        topic.label_weights = t < 2 ? std::map<std::string, double>{{"match", 0.5}, {"other", 0.5}}
                                    : std::map<std::string, double>{{"other", 1.0}};
        spec.topics.push_back(topic);
      }
      corpus = generate_topic_mixture(spec);
    } else {
      throw Error(ErrorKind::parameter, "unknown preset '" + args.preset + "' (expected labels or filter)");
    }
    save_corpus(corpus, args.out, format_from_extension(args.out));
    out << "wrote " << corpus.n_rows() << " records to " << args.out << "\n";
    return 0;
  });
}

int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const QuerySpec base = parse_query(read_json_file(args.config));
    auto corpus = std::make_shared<const Corpus>(load_any(args.common.corpus, args.common.text_column));
    auto embedder = make_embedder(args.common.embed_dim);
    auto embeddings = std::make_shared<const EmbeddingMatrix>(embed_corpus(*corpus, *embedder));
    const std::vector<std::uint64_t> seeds = args.seeds.empty() ? std::vector<std::uint64_t>{1, 2, 3, 4, 5} : args.seeds;

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %5s %8s %14s %14s %12s\n", "policy", "runs", "reached",
                  "median_n", "median_frac", "final_err");
    out << "bound " << args.bound << (args.relative ? " (relative)" : "") << "\n" << line;
    for (Policy policy : {Policy::adjust, Policy::no_adjust, Policy::random}) {
      std::vector<double> to_bound;
      std::vector<double> final_err;
      for (auto seed : seeds) {
        QuerySpec q = base;
        q.policy = policy;
        q.seed = seed;
        const auto p = plan(q, corpus, PlanOptions{nullptr, embeddings});
        auto labeler = make_labeler(args.common.labeler, args.common.noise, *corpus, p.query.task);
        RunControl control;
        RunOptions options;
        options.seconds_per_call = args.common.seconds_per_call.value_or(1.0);
        options.log_labels = false;
        const RunLog log = run(p, *labeler, nullptr, control, options);
        if (log.state() == RunState::aborted) throw Error(ErrorKind::state, "ablation run aborted");
        const auto emissions = log.emissions();
        if (auto e = first_within(emissions, args.bound, args.relative)) to_bound.push_back(static_cast<double>(e->n_labeled));
        const auto report = convergence_report(log);
        if (!report.rows.empty() && report.rows.back().abs_error) final_err.push_back(*report.rows.back().abs_error);
      }
      const bool all = to_bound.size() == seeds.size();
      const double med = all ? median(to_bound) : 0.0;
      char buf[64], frac[64], ferr[64];
      std::snprintf(buf, sizeof buf, "%.1f", med);
      std::snprintf(frac, sizeof frac, "%.2f%%", 100.0 * med / static_cast<double>(corpus->n_rows()));
      std::snprintf(ferr, sizeof ferr, "%.5f", final_err.empty() ? 0.0 : median(final_err));
      std::snprintf(line, sizeof line, "%-10s %5zu %8zu %14s %14s %12s\n", to_string(policy), seeds.size(),
                    to_bound.size(), all ? buf : "not reached", all ? frac : "-", final_err.empty() ? "-" : ferr);
      out << line;
      rows.push_back({{"policy", to_string(policy)},
                      {"runs", seeds.size()},
                      {"reached", to_bound.size()},
                      {"median_samples_to_bound", all ? nlohmann::ordered_json(med) : nlohmann::ordered_json(nullptr)}});
    }
    if (!args.out.empty()) {
      std::ofstream f(args.out);
      f << rows.dump(2) << "\n";
    }
    return 0;
  });
}

namespace {
Service* active_service = nullptr;
void on_signal(int) {
  if (active_service) active_service->shutdown();
}
}  // namespace

int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ServiceConfig config;
    config.host = args.host;
    config.port = args.port;
    config.log_dir = args.log_dir;
    config.embedder = make_embedder(args.embed_dim);
    for (const auto& path : args.corpora) {
      CorpusEntry entry;
      entry.name = std::filesystem::path(path).stem().string();
      entry.corpus = std::make_shared<const Corpus>(load_any(path, args.text_column));
      config.corpora.push_back(std::move(entry));
    }
    if (config.corpora.empty()) throw Error(ErrorKind::parameter, "serve needs at least one --corpus");
    const std::string labeler = args.labeler;
    const double noise = args.noise;
    config.labeler = [labeler, noise](const Corpus& corpus, const LabelTask& task) {
      return make_labeler(labeler, noise, corpus, task);
    };
    Service service(std::move(config));
    const int port = service.start();
    out << "listening on http://" << args.host << ":" << port << "\n" << std::flush;
    active_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.wait();
    active_service = nullptr;
    return 0;
  });
}

}  // namespace olla::cli
