#include <CLI11.hpp>

#include <iostream>

#include "hflab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hartree-Fock moment and regularity lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hflab::version_string());

  std::string config;
  std::string out;
  int threads = 1;
  std::uint64_t seed = 0;

  const char* commands[][2] = {
      {"evolve", "run one evolution and record observables"},
      {"sweep", "run the evolution for every hbar in the config"},
      {"ensemble", "evaluate inequality checks on a seeded state ensemble"},
      {"oracle", "cross-validate against the dense reference (N <= 8)"},
  };
  std::vector<CLI::Option*> seed_opts;
  for (auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    seed_opts.push_back(sub->add_option("--seed", seed, "override state.seed"));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hflab::kExitConfig;
  }

  hflab::CommandOptions options;
  options.out = out;
  options.threads = threads;
  for (auto* opt : seed_opts) {
    if (opt->count() > 0) options.seed = seed;
  }
  return hflab::run_command(app.get_subcommands().front()->get_name(), config, options);
}
