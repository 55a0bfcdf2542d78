#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace hybridrag {

enum class HitSource { kSparse, kDense, kFused };

std::string_view to_string(HitSource source) noexcept;
std::optional<HitSource> parse_hit_source(std::string_view text) noexcept;

/// One entry of a ranked result list. Within a list ranks run 1..n and
/// scores are non-increasing.
struct RetrievedHit {
  std::string chunk_id;
  double score = 0.0;
  std::size_t rank = 0;
  HitSource source = HitSource::kFused;

  friend bool operator==(const RetrievedHit&, const RetrievedHit&) = default;
};

}  // namespace hybridrag
