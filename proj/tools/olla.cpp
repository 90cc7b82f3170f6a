#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace olla::cli;
  CLI::App app{"olla: online aggregation for LLM queries over text corpora"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, CommonOptions& c) {
    cmd->add_option("--corpus", c.corpus, "CSV or JSONL corpus")->required();
    cmd->add_option("--text-column", c.text_column, "name of the text column");
    cmd->add_option("--embed-dim", c.embed_dim, "dimension of the built-in embedder");
    cmd->add_option("--labeler", c.labeler, "oracle or llm (OLLA_LLM_URL/MODEL/KEY)");
    cmd->add_option("--noise", c.noise, "oracle label noise rate");
    cmd->add_option("--seconds-per-call", c.seconds_per_call, "logical clock: seconds charged per labeler call");
  };

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute a query and stream estimates as JSONL");
  add_common(run_cmd, run.common);
  run_cmd->add_option("--config", run.config, "query JSON file")->required();
  run_cmd->add_option("--seed", run.seed, "override the query seed");
  run_cmd->add_option("--policy", run.policy, "adjust, no-adjust or random");
  run_cmd->add_option("--out", run.out, "write the run log here");
  run_cmd->add_flag("--quiet", run.quiet, "do not print emissions");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "convergence report from a run log");
  report_cmd->add_option("log", report.log, "run log (JSONL)")->required();
  report_cmd->add_flag("--json", report.json, "emit JSON");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus with truth columns");
  synth_cmd->add_option("--out", synth.out, "output .csv or .jsonl")->required();
  synth_cmd->add_option("--preset", synth.preset, "labels or filter");
  synth_cmd->add_option("--n", synth.n, "records");
  synth_cmd->add_option("--k", synth.k, "categories (labels preset)");
  synth_cmd->add_option("--contamination", synth.contamination, "cross-topic label rate (labels preset)");
  synth_cmd->add_option("--value-stddev", synth.value_stddev, "stddev of the value column");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "compare adjust, no-adjust and random over seeds");
  add_common(ablate_cmd, ablate.common);
  ablate_cmd->add_option("--config", ablate.config, "query JSON file")->required();
  ablate_cmd->add_option("--seeds", ablate.seeds, "run seeds");
  ablate_cmd->add_option("--bound", ablate.bound, "half-width bound");
  ablate_cmd->add_flag("--relative", ablate.relative, "bound relative to |estimate|");
  ablate_cmd->add_option("--out", ablate.out, "write the table as JSON here");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP service with SSE estimate streams");
  serve_cmd->add_option("--corpus", serve.corpora, "corpus files (name = file stem)")->required();
  serve_cmd->add_option("--text-column", serve.text_column, "name of the text column");
  serve_cmd->add_option("--embed-dim", serve.embed_dim, "dimension of the built-in embedder");
  serve_cmd->add_option("--labeler", serve.labeler, "oracle or llm");
  serve_cmd->add_option("--noise", serve.noise, "oracle label noise rate");
  serve_cmd->add_option("--host", serve.host, "bind address");
  serve_cmd->add_option("--port", serve.port, "port (0 = any)");
  serve_cmd->add_option("--log-dir", serve.log_dir, "save run logs here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run_cmd) return cmd_run(run, std::cout, std::cerr);
  if (*report_cmd) return cmd_report(report, std::cout, std::cerr);
  if (*synth_cmd) return cmd_synth(synth, std::cout, std::cerr);
  if (*ablate_cmd) return cmd_ablate(ablate, std::cout, std::cerr);
  if (*serve_cmd) return cmd_serve(serve, std::cout, std::cerr);
  return 2;
}
