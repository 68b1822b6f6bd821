// SPDX-License-Identifier: MIT
#pragma once

// Experiment harness behind the CLI: config parsing (strict JSON schema),
// deterministic parallel execution, and CSV/JSON result emission.

#include <cstdint>
#include <optional>
#include <string>

#include "cart/data.hpp"

namespace cart {

struct Problem {
  FeatureDistribution dist;
  SparseTarget target;
  NoiseModel noise;
};

// Parses a problem object ({"d":..., "distribution":..., "target":...,
// "noise":...}) from JSON text.  Throws config_error on schema violations.
Problem parse_problem_json(const std::string& text);

// Runs one experiment end to end: parses the config document (unknown keys
// rejected), executes the named kind ("rate", "coverage", "xor", "diagnose",
// "oracle_table"), and writes rows.csv plus summary.json under out_dir.
// Aggregates in summary.json are recomputed from the emitted rows.csv, so
// the two artifacts can never drift apart.  seed/threads overrides replace
// the config's values.
void run_experiment(const std::string& kind, const std::string& config_text,
                    const std::string& out_dir,
                    std::optional<std::uint64_t> seed_override,
                    std::optional<int> threads_override);

}  // namespace cart
