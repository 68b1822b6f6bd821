// SPDX-License-Identifier: MIT
//
// cart: experiment driver for regression trees and honest forests over
// binary features.  Every subcommand reads a JSON config and writes
// rows.csv plus summary.json into the output directory.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "cart/errors.hpp"
#include "cart/experiments.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "override the config's master seed");
  cmd->add_option("--threads", opts.threads,
                  "override the config's worker thread count");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw cart::config_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regression-tree and honest-forest experiments"};
  app.require_subcommand(1);

  // Subcommand name -> config section key ("oracle-table" uses the
  // "oracle_table" section).
  const struct {
    const char* name;
    const char* kind;
    const char* help;
  } kinds[] = {
      {"rate", "rate", "mean-squared-error decay across sample sizes"},
      {"coverage", "coverage", "confidence-interval coverage for forests"},
      {"xor", "xor", "levels until a pure interaction pair is detected"},
      {"diagnose", "diagnose", "structural constants of a population problem"},
      {"oracle-table", "oracle_table", "exact variance table over split sets"},
  };

  CommonOpts opts[std::size(kinds)];
  std::string selected;
  for (std::size_t i = 0; i < std::size(kinds); ++i) {
    CLI::App* cmd = app.add_subcommand(kinds[i].name, kinds[i].help);
    add_common(cmd, opts[i]);
    const std::string kind = kinds[i].kind;
    cmd->callback([&selected, kind] { selected = kind; });
  }

  CLI11_PARSE(app, argc, argv);

  std::size_t idx = 0;
  for (std::size_t i = 0; i < std::size(kinds); ++i)
    if (selected == kinds[i].kind) idx = i;

  try {
    const std::string config_text = read_file(opts[idx].config_path);
    cart::run_experiment(selected, config_text, opts[idx].out_dir,
                         opts[idx].seed, opts[idx].threads);
  } catch (const cart::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cart::cap_error& e) {
    std::cerr << "oracle cap exceeded: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
