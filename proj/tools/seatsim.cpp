// seatsim: simulate | compare | calibrate | validate. Exit codes: 0 ok,
// 2 config or validation error, 3 divergence, 4 missing run (compare).

#include <CLI11.hpp>

#include "seatsim/runner.hpp"

int main(int argc, char** argv) {
  using namespace seatsim::cli;
  CLI::App app{"Seated occupant vibration simulator"};
  app.set_version_flag("--version", SEATSIM_VERSION);
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string reference;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::vector<CLI::Option*> seed_options;
  auto common = [&](CLI::App* sub, const char* config_help) {
    sub->add_option("--config", config, config_help)->required();
    sub->add_option("--out", out, "output root (overrides run.output_dir)");
    seed_options.push_back(sub->add_option("--seed", seed, "excitation and optimizer seed (overrides run.seed)"));
    sub->add_option("--jobs", jobs, "concurrent simulations")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "run one config, or every config in a directory");
  common(simulate, "config file or directory of configs");
  auto* compare = app.add_subcommand("compare", "compare completed runs of the configs in a directory");
  common(compare, "directory with two or more configs");
  auto* calibrate = app.add_subcommand("calibrate", "fit joint gains to reference transmissibility curves");
  common(calibrate, "config with a calibration section");
  calibrate->add_option("--reference", reference, "reference CSV or run directory (overrides calibration.reference)");
  auto* validate = app.add_subcommand("validate", "check configs; with --out, write the expanded canonical form");
  common(validate, "config file or directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  Overrides o;
  if (!out.empty()) o.out = out;
  for (const auto* opt : seed_options)
    if (opt->count() > 0) o.seed = seed;
  o.jobs = jobs;

  if (app.got_subcommand(simulate)) return cmd_simulate(config, o, std::cout, std::cerr);
  if (app.got_subcommand(compare)) return cmd_compare(config, o, std::cout, std::cerr);
  if (app.got_subcommand(calibrate)) {
    std::optional<std::filesystem::path> ref;
    if (!reference.empty()) ref = reference;
    return cmd_calibrate(config, ref, o, std::cout, std::cerr);
  }
  return cmd_validate(config, o, std::cout, std::cerr);
}
