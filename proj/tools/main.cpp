#include <CLI11.hpp>

#include <iostream>

#include "cli/commands.hpp"
#include "eciin/errors.hpp"

int main(int argc, char** argv) {
  using namespace eciin::cli;

  CLI::App app{"ECIIN onfocus detection: training, evaluation and eye-region mining"};
  app.require_subcommand(1);
  app.footer(
      "Any configuration key can be given as --key=value or --key value after the subcommand\n"
      "(for example --preset=HF --routing.iterations=5 --train.epochs=20). Short forms: --n, --epochs,\n"
      "--lr, --out, --model, --manifest. Artifacts go to --output.dir, defaulting to\n"
      "$ECIIN_OUTPUT_ROOT/<command> (eciin_runs/<command> when unset).");
  std::string config_file;
  for (const auto& info : commands()) {
    CLI::App* sub = app.add_subcommand(info.name, info.summary);
    sub->allow_extras();
    sub->add_option("--config", config_file, "key-value configuration file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const RunConfig cfg = parse_config(config_file, parse_flag_tokens(sub->remaining()));
    return dispatch(sub->get_name(), cfg, std::cout, std::cerr);
  } catch (const eciin::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
