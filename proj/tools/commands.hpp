#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace olla::cli {

struct CommonOptions {
  std::string corpus;
  std::string text_column = "text";
  std::size_t embed_dim = 128;
  std::string labeler = "oracle";  // oracle | llm
  double noise = 0.0;
  std::optional<double> seconds_per_call;
};

struct RunArgs {
  CommonOptions common;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  std::string out;
  bool quiet = false;
};

struct ReportArgs {
  std::string log;
  bool json = false;
};

struct SynthArgs {
  std::string out;
  std::string preset = "labels";  // labels | filter
  std::size_t n = 1000;
  std::size_t k = 3;
  double contamination = 0.0;
  double value_stddev = 10.0;
  std::uint64_t seed = 0;
};

struct AblateArgs {
  CommonOptions common;
  std::string config;
  std::vector<std::uint64_t> seeds;
  double bound = 0.05;
  bool relative = false;
  std::string out;
};

struct ServeArgs {
  std::vector<std::string> corpora;
  std::string text_column = "text";
  std::size_t embed_dim = 128;
  std::string labeler = "oracle";
  double noise = 0.0;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_dir;
};

// Each returns the process exit code: 0 success, 1 runtime abort, 2 bad input.
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err);
int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err);

}  // namespace olla::cli
