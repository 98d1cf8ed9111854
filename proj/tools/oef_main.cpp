#include <CLI11.hpp>

#include "oef/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"optimal energy flow over coupled electricity and gas networks"};
  app.require_subcommand(1);
  oef::CliOptions opt;

  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--network", opt.network, "network JSON path")->required();
    cmd->add_option("--weymouth", opt.weymouth, "pipeline flow handling")
        ->check(CLI::IsMember({"uni", "bi"}));
    cmd->add_option("--penalty", opt.penalty, "consensus penalty weight d");
    cmd->add_option("--tol-pri", opt.tol_pri, "primal residual tolerance");
    cmd->add_option("--tol-dual", opt.tol_dual, "dual residual tolerance");
    cmd->add_option("--max-iter", opt.max_iter, "sweep limit");
    cmd->add_option("--trace", opt.trace_path, "write the iteration trace CSV here");
    cmd->add_option("--summary", opt.summary_path, "write the summary JSON here");
    cmd->add_flag("--stop-either", opt.stop_either,
                  "stop when either residual passes instead of both");
    cmd->add_flag("--timing", opt.timing,
                  "record wall times (off by default so outputs reproduce byte-identically)");
  };

  CLI::App* solve = app.add_subcommand("solve", "run one solver and report");
  add_common(solve);
  solve->add_option("--mode", opt.mode, "central|distributed")
      ->check(CLI::IsMember({"central", "distributed"}));

  CLI::App* compare =
      app.add_subcommand("compare", "run the distributed solver and the reference, report the gap");
  add_common(compare);

  CLI11_PARSE(app, argc, argv);
  if (solve->parsed()) return oef::cmd_solve(opt);
  return oef::cmd_compare(opt);
}
