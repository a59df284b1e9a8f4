#pragma once

#include <stdexcept>
#include <string>

namespace fixopt {

struct dimension_mismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct invalid_input : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Subgradient oracle returned a (near-)zero vector while the function value
// was still positive. Signals a broken oracle, not a recoverable state.
struct degenerate_subgradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct unsupported_instance : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A user update tried to read data not reachable over the configured
// topology. Test hook; never caught in production paths.
struct topology_violation : std::logic_error {
  using std::logic_error::logic_error;
};

struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct generation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fixopt
