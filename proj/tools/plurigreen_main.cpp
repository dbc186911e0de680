// plurigreen run --config cfg.json [--out DIR] [--verbosity N]
// plurigreen report SUMMARY... [--out DIR]
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plurigreen/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"weighted envelope runs on the sphere"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int verbosity = -1;
  auto* run = app.add_subcommand("run", "execute one config");
  run->add_option("--config", config_path, "JSON run config")->required();
  run->add_option("--out", out_dir, "output directory override");
  run->add_option("--verbosity", verbosity, "0 quiet, 1 progress");

  std::vector<std::string> summaries;
  std::string report_out = ".";
  auto* report = app.add_subcommand("report", "merge summary.json files");
  report->add_option("summaries", summaries, "summary.json paths");
  report->add_option("--out", report_out, "directory for report.csv/report.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      plurigreen::RunOverrides ov = plurigreen::overrides_from_env();
      if (!out_dir.empty()) ov.out_dir = out_dir;  // flag beats environment
      if (verbosity >= 0) ov.verbosity = verbosity;
      auto a = plurigreen::run_config_file(config_path, ov);
      if (!a.error.empty()) std::fprintf(stderr, "plurigreen: %s\n", a.error.c_str());
      return a.exit_code;
    }
    return plurigreen::report_files(summaries, report_out, std::cout);
  } catch (const plurigreen::ConfigError& e) {
    std::fprintf(stderr, "plurigreen: %s\n", e.what());
    return 2;
  } catch (const plurigreen::NumericError& e) {
    std::fprintf(stderr, "plurigreen: %s\n", e.what());
    return 3;
  }
}
