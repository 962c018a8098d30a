// creolelm: command-line driver for data building, identifier training,
// masked-LM training, evaluation, tagging, PAD and sweeps.
//
// Exit codes: 0 ok, 1 validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "creole/config.hpp"
#include "creole/experiment.hpp"
#include "creole/text.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required();
  cmd->add_option("--out", c.out, "output directory (overrides the config's output)");
  cmd->add_option("--seed", c.seed, "global seed (overrides the config)");
}

// Loads and validates; prints problems and returns nullopt on failure.
std::optional<creole::ExperimentConfig> load(const Common& c, bool needs_out) {
  creole::ConfigLoad loaded = creole::load_experiment_config(c.config);
  if (loaded.ok()) {
    if (c.seed) loaded.config.seed = *c.seed;
    if (!c.out.empty()) loaded.config.output = c.out;
    if (needs_out && loaded.config.output.empty())
      loaded.errors.push_back("output: no output directory (set 'output' or pass --out)");
    else if (!c.out.empty())
      for (auto& e : creole::check_config(loaded.config)) loaded.errors.push_back(e);
  }
  if (!loaded.ok()) {
    for (const auto& e : loaded.errors) std::cerr << "error: " << e << '\n';
    return std::nullopt;
  }
  return loaded.config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked language models for creoles with group DRO"};
  app.require_subcommand(1);

  Common common;
  std::string axis = "weight_decay";
  std::string values;

  struct Command {
    CLI::App* app;
    bool needs_out;
  };
  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, bool needs_out) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    commands.push_back({cmd, needs_out});
    return cmd;
  };
  add("validate", "check a config and report every problem", false);
  add("build-data", "load, mix, split and group; write train/dev TSV and the vocabulary", true);
  add("langid-train", "train the character n-gram language identifier", true);
  add("langid-report", "per-language confidence histogram over the creole corpus", true);
  add("train", "train a masked LM (ERM or group DRO)", true);
  add("eval", "intrinsic evaluation of the best checkpoint in --out", true);
  add("tag", "fine-tune and evaluate a tagger from the best checkpoint in --out", true);
  add("pad", "proxy A-distance for the configured domain pairs", true);
  add("run", "the whole pipeline with a manifest", true);
  CLI::App* sweep = add("sweep", "one run per value and objective", true);
  sweep->add_option("--axis", axis, "preset or weight_decay")->check(CLI::IsMember({"preset", "weight_decay"}));
  sweep->add_option("--values", values, "comma-separated values (default: the standard grid)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (c.app->parsed()) chosen = &c;
  const std::string name = chosen->app->get_name();

  const auto config = load(common, chosen->needs_out);
  if (!config) return kInvalid;
  if (name == "validate") {
    std::cout << "ok\n";
    return kOk;
  }

  try {
    const auto& out = config->output;
    if (name == "build-data") creole::build_data_stage(*config, out);
    else if (name == "langid-train") creole::langid_train_stage(*config, out);
    else if (name == "langid-report") creole::langid_report_stage(*config, out);
    else if (name == "train") creole::train_stage(*config, out);
    else if (name == "eval") creole::eval_stage(*config, out);
    else if (name == "tag") creole::tag_stage(*config, out);
    else if (name == "pad") creole::pad_stage(*config, out);
    else if (name == "run") creole::run_experiment(*config, out);
    else if (name == "sweep") {
      const auto ax = creole::parse_sweep_axis(axis);
      std::vector<std::string> vals;
      if (sweep->count("--values")) {
        for (const auto& v : creole::text::split(values, ','))
          if (!creole::text::trim(v).empty()) vals.emplace_back(creole::text::trim(v));
        if (vals.empty()) {
          std::cerr << "error: --values is empty\n";
          return kInvalid;
        }
      } else {
        vals = creole::default_sweep_values(ax);
      }
      const auto rows = creole::run_sweep(*config, ax, vals, out);
      creole::write_sweep_text(std::cout, ax, rows);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  if (name == "eval" || name == "run") {
    std::ifstream report(config->output / "report.txt");
    std::cout << report.rdbuf();
  }
  return kOk;
}
