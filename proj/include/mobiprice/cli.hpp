#pragma once

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mobiprice/config.hpp"
#include "mobiprice/core/error.hpp"
#include "mobiprice/pipeline.hpp"

namespace mobiprice {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct Subcommand {
  const char* name;
  const char* help;
  std::function<void(const RunConfig&, std::ostream&)> run;
};

inline const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> cmds = {
      {"synth", "generate a synthetic city under <out_dir>/synth",
       [](const RunConfig& c, std::ostream&) { stage_synth(c); }},
      {"detect-stops", "pings to stops", [](const RunConfig& c, std::ostream&) { stage_detect_stops(c); }},
      {"infer-homes", "stops to homes", [](const RunConfig& c, std::ostream&) { stage_infer_homes(c); }},
      {"build-features", "properties, stops and homes to the feature table",
       [](const RunConfig& c, std::ostream&) { stage_build_features(c); }},
      {"train", "fit the stacked list-price model", [](const RunConfig& c, std::ostream&) { stage_train(c); }},
      {"evaluate", "score the trained model on train and holdout rows",
       [](const RunConfig& c, std::ostream&) { stage_evaluate(c); }},
      {"explain", "Shapley top-k report for the trained model",
       [](const RunConfig& c, std::ostream&) { stage_explain(c); }},
      {"run-listprice", "static/static versus static/dynamic stacked comparison",
       [](const RunConfig& c, std::ostream&) { stage_listprice(c); }},
      {"run-tax", "per-kind dynamic-only forests with Shapley rankings",
       [](const RunConfig& c, std::ostream& err) { stage_tax(c, &err); }},
  };
  return cmds;
}

inline std::string config_key_help() {
  std::string s = "Config keys (key = value, '#' comments):\n";
  for (const auto& k : config_keys()) s += "  " + k.name + "  " + k.doc + "\n";
  return s;
}

// Returns the process exit code; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Mobility-derived property price features and models", "mobiprice"};
  app.require_subcommand(1);
  app.footer(config_key_help());
  std::string config_path;
  std::optional<std::uint64_t> seed;
  for (const auto& cmd : subcommands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--seed", seed, "override the root seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    validate_config(cfg);
    for (const auto& cmd : subcommands()) {
      if (app.got_subcommand(cmd.name)) {
        cmd.run(cfg, err);
        out << cmd.name << ": done (" << cfg.out_dir << "/manifest.txt)\n";
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace mobiprice
