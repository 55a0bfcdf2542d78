#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "hybridrag/types.hpp"

namespace hybridrag {

struct FusionWeights {
  double sparse_w = 0.3;
  double dense_w = 0.7;

  /// Throws Error(kInvalidArgument) with "weight out of range" unless
  /// 0 <= sparse_w <= 1; dense_w is its complement.
  static FusionWeights from_sparse(double sparse_w);
  void validate() const;

  friend bool operator==(const FusionWeights&, const FusionWeights&) = default;
};

enum class FusionMode { kWeightedRrf, kLinearScore };

std::string_view to_string(FusionMode mode) noexcept;
FusionMode parse_fusion_mode(std::string_view text);

struct FusionConfig {
  FusionMode mode = FusionMode::kWeightedRrf;
  int rrf_k = 60;
  std::size_t k = 10;

  void validate() const;
};

/// Depth each leg is searched to before fusing a top-k: max(2k, 20).
constexpr std::size_t leg_depth(std::size_t k) noexcept { return k * 2 > 20 ? k * 2 : 20; }

// Both fusers share these rules. A document is a candidate only if it
// appears in a leg whose weight is positive. Leg rank is list position
// (1-based); an id repeated in a leg keeps its first position. Output is
// sorted by fused score descending, ties by ascending chunk id, truncated to
// config.k, with ranks 1..n and source kFused.

/// score(d) = sparse_w / (rrf_k + rank_sparse(d)) + dense_w / (rrf_k + rank_dense(d)),
/// a missing leg contributing 0.
std::vector<RetrievedHit> fuse_rrf(std::span<const RetrievedHit> sparse_hits,
                                   std::span<const RetrievedHit> dense_hits,
                                   const FusionWeights& weights, const FusionConfig& config);

/// Each leg's scores are min-max normalized to [0, 1] (a constant leg maps
/// to 1.0), then mixed: sparse_w * s + dense_w * d, a missing leg
/// contributing 0.
std::vector<RetrievedHit> fuse_linear(std::span<const RetrievedHit> sparse_hits,
                                      std::span<const RetrievedHit> dense_hits,
                                      const FusionWeights& weights, const FusionConfig& config);

std::vector<RetrievedHit> fuse(std::span<const RetrievedHit> sparse_hits,
                               std::span<const RetrievedHit> dense_hits,
                               const FusionWeights& weights, const FusionConfig& config);

}  // namespace hybridrag
