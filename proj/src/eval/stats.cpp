#include "hybridrag/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag::eval {

namespace {

double percentile(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

std::string_view to_string(CiMethod method) noexcept {
  return method == CiMethod::kWilson ? "wilson" : "bootstrap_percentile";
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t n_resamples,
                                std::uint64_t seed) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "bootstrap needs at least one value");
  if (n_resamples == 0) throw Error(ErrorCode::kInvalidArgument, "n_resamples must be positive");
  const std::size_t n = values.size();
  double total = 0.0;
  for (double v : values) total += v;
  ConfidenceInterval ci;
  ci.point = total / static_cast<double>(n);
  ci.n_resamples = n_resamples;
  ci.method = CiMethod::kBootstrapPercentile;

  std::mt19937_64 rng(seed);
  std::vector<double> stats(n_resamples);
  for (auto& s : stats) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[uniform_index(rng, n)];
    s = sum / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  ci.lo = std::min(percentile(stats, 0.025), ci.point);
  ci.hi = std::max(percentile(stats, 0.975), ci.point);
  return ci;
}

ConfidenceInterval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "wilson interval needs n >= 1");
  if (successes > n) throw Error(ErrorCode::kInvalidArgument, "successes exceed n");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  ConfidenceInterval ci;
  ci.point = p;
  ci.method = CiMethod::kWilson;
  ci.lo = successes == 0 ? 0.0 : std::clamp(center - half, 0.0, p);
  ci.hi = successes == n ? 1.0 : std::clamp(center + half, p, 1.0);
  return ci;
}

}  // namespace hybridrag::eval
