#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "netnewton/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous network Newton solver and experiment runner"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed_override;
  std::string out_dir;
  bool quiet = false;
  app.add_option("--seed-override", seed_override, "Base seed replacing run.seed / verify.seed");
  app.add_option("--out", out_dir, "Output directory (overrides config and $NETNEWTON_OUT)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::string path;
  bool zero_as_negative = false;
  auto* run = app.add_subcommand("run", "Run the configured experiment");
  run->add_option("config", path, "INI config file")->required();
  auto* sweep = app.add_subcommand("sweep", "Topology and size sweep");
  sweep->add_option("config", path, "INI config file")->required();
  auto* verify = app.add_subcommand("verify", "Check algebraic identities and theory bounds");
  verify->add_option("config", path, "INI config file")->required();
  auto* parse = app.add_subcommand("parse-data", "Summarize a LIBSVM file");
  parse->add_option("file", path, "LIBSVM text file")->required();
  parse->add_flag("--zero-as-negative", zero_as_negative, "Read label 0 as -1");

  for (auto* sub : {run, sweep, verify}) {
    sub->add_option("--seed-override", seed_override, "Base seed replacing run.seed / verify.seed");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_flag("--quiet", quiet, "Suppress progress output");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : netnewton::kExitConfig;
  }

  netnewton::CommandOptions opts;
  opts.seed_override = seed_override;
  opts.quiet = quiet;
  if (!out_dir.empty()) opts.out_dir = out_dir;

  if (*run) return netnewton::cmd_run(path, opts, std::cout, std::cerr);
  if (*sweep) return netnewton::cmd_sweep(path, opts, std::cout, std::cerr);
  if (*verify) return netnewton::cmd_verify(path, opts, std::cout, std::cerr);
  return netnewton::cmd_parse_data(path, zero_as_negative, std::cout, std::cerr);
}
