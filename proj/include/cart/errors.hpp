// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>

namespace cart {

// Enumeration-cap violations get their own type so the CLI can map them to a
// dedicated exit code.
struct cap_error : std::length_error {
  using std::length_error::length_error;
};

// Malformed experiment configuration (CLI exit code 2).
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace cart
