#include <iostream>

#include <CLI11.hpp>

#include "restore/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Blackstart restoration sequencing"};
  app.require_subcommand(1);
  restore::CliOptions o;
  int jobs = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--case", o.case_path, "Case file (bus-branch or node-breaker JSON)")->required();
    sub->add_option("--overrides", o.overrides_path, "Availability overrides JSON");
    sub->add_flag("--verbose", o.verbose, "Print warnings and progress to standard error");
  };

  auto* plan = app.add_subcommand("plan", "Plan a restoration from the all-open blackout state");
  common(plan);
  plan->add_option("--config", o.config_path, "Settings JSON");
  plan->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  plan->add_option("--jobs", jobs, "Concurrent subarea workers")->check(CLI::PositiveNumber);

  auto* validate = app.add_subcommand("validate", "Replay a plan and re-check every limit");
  common(validate);
  validate->add_option("--config", o.config_path, "Settings JSON (limits)");
  validate->add_option("--out", o.out_dir, "Directory holding plan.json")->capture_default_str();
  validate->add_option("--plan", o.plan_path, "Plan file, overrides --out");

  auto* convert = app.add_subcommand("convert", "Write the node-breaker expansion of a case");
  convert->add_option("--case", o.case_path, "Bus-branch case file")->required();
  convert->add_option("--out", o.out_dir, "Output file")->required();
  convert->add_flag("--verbose", o.verbose, "Print defaulted attributes");

  auto* inspect = app.add_subcommand("inspect", "Summarize elements, islands and served load");
  common(inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : restore::kExitInputError;
  }
  if (jobs > 0) o.jobs = jobs;

  if (*plan) return restore::cmd_plan(o, std::cerr);
  if (*validate) return restore::cmd_validate(o, std::cerr);
  if (*convert) return restore::cmd_convert(o, std::cerr);
  return restore::cmd_inspect(o, std::cout, std::cerr);
}
