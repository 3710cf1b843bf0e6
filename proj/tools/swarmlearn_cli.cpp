// swarmlearn: train, evaluate, transfer, ablate, interpret.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "swarmlearn/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learned swarm optimizer experiments"};
  app.require_subcommand(1);
  std::string config, out;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"train", "evaluate", "transfer", "ablate", "interpret"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "typed key-value config file")->required();
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--seed", seed, "base seed, overrides the config");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return swarmlearn::exit_config;
  }
  swarmlearn::CommandContext ctx;
  ctx.out_dir = out;
  ctx.seed = seed;
  try {
    ctx.threads = swarmlearn::thread_count_from_env();
  } catch (const swarmlearn::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return swarmlearn::exit_config;
  }
  return swarmlearn::run_command(app.get_subcommands().front()->get_name(), config, ctx, std::cerr);
}
