#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pigan {

inline constexpr const char* kToolVersion = "0.1.0";

// Single global tolerance below which an eigenvalue counts as numerically
// nonnegative. Candidates with eigenvalues in [-kPsdTol, 0) are treated as PSD.
inline constexpr double kPsdTol = 1e-9;

// Algorithmic failure (non-convergence, non-PSD input, NaN during training).
// `detail` carries the offending quantity, e.g. a residual or eigenvalue.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what, double detail = 0.0)
      : std::runtime_error(what), detail_(detail) {}
  double detail() const noexcept { return detail_; }

private:
  double detail_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double v);

// Stable sub-stream derivation so auxiliary draws (e.g. mid-training
// evaluation batches) do not perturb the main training stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace pigan
