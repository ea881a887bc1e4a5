// mdaimpute: fit, impute, analyze, validate and bench from an INI config.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mda/errors.hpp"
#include "mda/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monotone data augmentation for longitudinal multiple imputation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  struct Sub {
    const char* name;
    const char* help;
    mda::Command command;
  };
  const Sub subs[] = {
      {"fit", "run the sampler; write draws.csv, diagnostics.json, manifest.ini", mda::Command::Fit},
      {"impute", "fit, then write M completed datasets", mda::Command::Impute},
      {"analyze", "fit, impute, analyze each dataset and combine with Rubin's rules (mi.json)",
       mda::Command::Analyze},
      {"validate", "dry-run checks on the config and data", mda::Command::Validate},
      {"bench", "compare MDA and FDA timing and mixing (continuous outcomes)", mda::Command::Bench},
  };
  std::optional<mda::Command> chosen;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", config_path, "INI configuration file")->required();
    sc->add_option("--seed", seed, "random seed (overrides the config)");
    sc->add_option("--out", out_dir, "output directory (overrides the config)");
    sc->callback([&chosen, c = s.command] { chosen = c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  mda::RunConfig config;
  try {
    config = mda::load_config(config_path);
  } catch (const mda::Error& e) {
    std::cerr << "error [" << mda::to_string(e.kind()) << "]: " << e.what() << '\n';
    return mda::exit_code(e);
  }
  if (seed) config.seed = *seed;
  if (!out_dir.empty()) config.out_dir = out_dir;
  return mda::run_command(*chosen, config, std::cout, std::cerr);
}
