#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace htstab {

// Precondition violations on public entry points.
class invalid_argument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested quantity does not exist for this problem family
// (e.g. a population gradient when the noise law has no mean).
class not_available : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An optimizer produced a non-finite iterate.
class numerical_divergence : public std::runtime_error {
 public:
  numerical_divergence(std::size_t step, const std::string& what)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class malformed_file : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class hash_mismatch : public malformed_file {
 public:
  using malformed_file::malformed_file;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_argument(msg);
}

}  // namespace detail
}  // namespace htstab
