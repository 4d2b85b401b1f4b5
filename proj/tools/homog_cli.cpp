// Command-line front end: cell solves, moment/bound evaluation, oracle
// verification and epsilon sweeps, driven by JSON configs. Emits CSV/JSON
// tables suitable for plotting. Exit codes: 0 success, 1 check failure,
// 2 config error, 3 convergence error.

#include <homog/cli_commands.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct Args {
  std::string config;
  std::string out;
  int threads = 0;
  long seed = 0;  // reserved, unused: all computations are deterministic
};

void add_common(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config, "JSON config file")->required();
  cmd->add_option("--out", args.out, "output directory (overrides output.directory)");
  cmd->add_option("--threads", args.threads, "worker thread cap (default: all)");
  cmd->add_option("--seed", args.seed, "reserved, unused");
}

void emit_error(const std::string& type, const std::string& message, int exit_code) {
  homog::json err{{"error", {{"type", type}, {"message", message}, {"exit_code", exit_code}}}};
  std::cout << err.dump(2) << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homog: periodic cell correctors, effective tensors and field-concentration bounds"};
  app.require_subcommand(1);

  Args args;
  CLI::App* solve_cell = app.add_subcommand("solve-cell", "solve the periodic corrector problem");
  CLI::App* moments = app.add_subcommand("moments", "evaluate concentration moment functionals");
  CLI::App* bound = app.add_subcommand("bound", "L^p lower bounds and Chebyshev tables");
  CLI::App* verify = app.add_subcommand("verify-oracle", "run the crystallite oracle checks");
  CLI::App* sweep = app.add_subcommand("sweep", "fine-scale epsilon sweep (2D)");
  for (CLI::App* cmd : {solve_cell, moments, bound, verify, sweep}) add_common(cmd, args);

  CLI11_PARSE(app, argc, argv);

  try {
    homog::cli::Context ctx;
    ctx.config = homog::cli::load_config(args.config);
    ctx.outdir = homog::cli::resolve_outdir(ctx.config, args.out);
    ctx.threads = args.threads > 0
                      ? args.threads
                      : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::filesystem::create_directories(ctx.outdir);

    homog::json summary;
    int exit_code = 0;
    if (app.got_subcommand(solve_cell)) {
      summary = homog::cli::cmd_solve_cell(ctx);
    } else if (app.got_subcommand(moments)) {
      summary = homog::cli::cmd_moments(ctx);
    } else if (app.got_subcommand(bound)) {
      summary = homog::cli::cmd_bound(ctx);
    } else if (app.got_subcommand(verify)) {
      summary = homog::cli::cmd_verify_oracle(ctx);
      if (!summary.value("all_pass", false)) exit_code = 1;
    } else if (app.got_subcommand(sweep)) {
      summary = homog::cli::cmd_sweep(ctx);
      for (const auto& v : summary.at("verdicts"))
        if (!v.at("pass").get<bool>()) exit_code = 1;
    }
    std::cout << summary.dump(2) << std::endl;
    return exit_code;
  } catch (const homog::ConvergenceError& e) {
    emit_error("convergence", e.what(), 3);
    return 3;
  } catch (const homog::ConfigError& e) {
    emit_error("config", e.what(), 2);
    return 2;
  } catch (const std::exception& e) {
    emit_error("config", e.what(), 2);
    return 2;
  }
}
