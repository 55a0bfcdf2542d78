#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace hybridrag::eval {

enum class CiMethod { kBootstrapPercentile, kWilson };
std::string_view to_string(CiMethod method) noexcept;

struct ConfidenceInterval {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_resamples = 0;
  CiMethod method = CiMethod::kBootstrapPercentile;
};

/// Percentile bootstrap (2.5 / 97.5) of the mean. Throws Error(kEmptyInput).
ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t n_resamples = 1000,
                                std::uint64_t seed = 0);

/// Wilson score interval for a binomial proportion. Requires n >= 1 and
/// successes <= n.
ConfidenceInterval wilson_interval(std::size_t successes, std::size_t n, double z = 1.96);

}  // namespace hybridrag::eval
