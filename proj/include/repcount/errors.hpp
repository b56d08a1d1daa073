#ifndef REPCOUNT_ERRORS_HPP
#define REPCOUNT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace repcount {

// Validation failures: bad shapes, bad config values, malformed files.
// The CLI maps these to exit status 1.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct shape_error : validation_error {
  explicit shape_error(const std::string& msg) : validation_error(msg) {}
};

struct config_error : validation_error {
  explicit config_error(const std::string& msg) : validation_error(msg) {}
};

struct io_error : validation_error {
  explicit io_error(const std::string& msg) : validation_error(msg) {}
};

// Zero-norm vectors fed to cosine similarity and friends. Deliberately loud:
// defining cos = 0 for these would silently corrupt pull/push gradients.
struct degenerate_input_error : std::runtime_error {
  explicit degenerate_input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Anything that should abort a run with exit status 2 (divergence,
// infeasible generation, internal invariant breakage).
struct runtime_failure : std::runtime_error {
  explicit runtime_failure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace repcount

#endif
