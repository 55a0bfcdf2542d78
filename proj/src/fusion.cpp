#include "hybridrag/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "hybridrag/error.hpp"

namespace hybridrag {

std::string_view to_string(HitSource source) noexcept {
  switch (source) {
    case HitSource::kSparse: return "sparse";
    case HitSource::kDense: return "dense";
    case HitSource::kFused: return "fused";
  }
  return "fused";
}

std::optional<HitSource> parse_hit_source(std::string_view text) noexcept {
  if (text == "sparse") return HitSource::kSparse;
  if (text == "dense") return HitSource::kDense;
  if (text == "fused") return HitSource::kFused;
  return std::nullopt;
}

FusionWeights FusionWeights::from_sparse(double sparse_w) {
  if (!(sparse_w >= 0.0 && sparse_w <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "weight out of range");
  }
  return FusionWeights{sparse_w, 1.0 - sparse_w};
}

void FusionWeights::validate() const {
  if (!(sparse_w >= 0.0 && sparse_w <= 1.0) || !(dense_w >= 0.0 && dense_w <= 1.0) ||
      std::abs(sparse_w + dense_w - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "weight out of range");
  }
}

std::string_view to_string(FusionMode mode) noexcept {
  return mode == FusionMode::kWeightedRrf ? "weighted_rrf" : "linear_score";
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "weighted_rrf" || text == "rrf") return FusionMode::kWeightedRrf;
  if (text == "linear_score" || text == "linear") return FusionMode::kLinearScore;
  throw Error(ErrorCode::kInvalidArgument, "unknown fusion mode");
}

void FusionConfig::validate() const {
  if (rrf_k < 1) throw Error(ErrorCode::kInvalidArgument, "rrf_k must be >= 1");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
}

namespace {

struct Candidate {
  double sparse = 0.0;
  double dense = 0.0;
};

// Per-leg contribution by chunk id; first occurrence wins.
template <typename ScoreFn>
void accumulate(std::span<const RetrievedHit> leg, double Candidate::* slot, ScoreFn fn,
                std::map<std::string, Candidate, std::less<>>& out) {
  std::map<std::string_view, bool> seen;
  for (std::size_t pos = 0; pos < leg.size(); ++pos) {
    const auto& hit = leg[pos];
    if (!seen.emplace(hit.chunk_id, true).second) continue;
    out[hit.chunk_id].*slot = fn(hit, pos + 1);
  }
}

std::vector<RetrievedHit> finish(std::map<std::string, Candidate, std::less<>>& candidates,
                                 const FusionWeights& weights, const FusionConfig& config) {
  std::vector<RetrievedHit> fused;
  fused.reserve(candidates.size());
  for (const auto& [id, c] : candidates) {
    fused.push_back({id, weights.sparse_w * c.sparse + weights.dense_w * c.dense, 0,
                     HitSource::kFused});
  }
  std::sort(fused.begin(), fused.end(), [](const RetrievedHit& a, const RetrievedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
  });
  if (fused.size() > config.k) fused.resize(config.k);
  for (std::size_t i = 0; i < fused.size(); ++i) fused[i].rank = i + 1;
  return fused;
}

std::span<const RetrievedHit> active(std::span<const RetrievedHit> leg, double weight) {
  return weight > 0.0 ? leg : std::span<const RetrievedHit>{};
}

}  // namespace

std::vector<RetrievedHit> fuse_rrf(std::span<const RetrievedHit> sparse_hits,
                                   std::span<const RetrievedHit> dense_hits,
                                   const FusionWeights& weights, const FusionConfig& config) {
  weights.validate();
  config.validate();
  const double k = config.rrf_k;
  auto rr = [k](const RetrievedHit&, std::size_t rank) {
    return 1.0 / (k + static_cast<double>(rank));
  };
  std::map<std::string, Candidate, std::less<>> candidates;
  accumulate(active(sparse_hits, weights.sparse_w), &Candidate::sparse, rr, candidates);
  accumulate(active(dense_hits, weights.dense_w), &Candidate::dense, rr, candidates);
  return finish(candidates, weights, config);
}

std::vector<RetrievedHit> fuse_linear(std::span<const RetrievedHit> sparse_hits,
                                      std::span<const RetrievedHit> dense_hits,
                                      const FusionWeights& weights, const FusionConfig& config) {
  weights.validate();
  config.validate();
  auto normalizer = [](std::span<const RetrievedHit> leg) {
    double lo = 0.0;
    double hi = 0.0;
    if (!leg.empty()) {
      auto [mn, mx] = std::minmax_element(
          leg.begin(), leg.end(),
          [](const RetrievedHit& a, const RetrievedHit& b) { return a.score < b.score; });
      lo = mn->score;
      hi = mx->score;
    }
    return [lo, hi](const RetrievedHit& hit, std::size_t) {
      return hi > lo ? (hit.score - lo) / (hi - lo) : 1.0;
    };
  };
  const auto sparse = active(sparse_hits, weights.sparse_w);
  const auto dense = active(dense_hits, weights.dense_w);
  std::map<std::string, Candidate, std::less<>> candidates;
  accumulate(sparse, &Candidate::sparse, normalizer(sparse), candidates);
  accumulate(dense, &Candidate::dense, normalizer(dense), candidates);
  return finish(candidates, weights, config);
}

std::vector<RetrievedHit> fuse(std::span<const RetrievedHit> sparse_hits,
                               std::span<const RetrievedHit> dense_hits,
                               const FusionWeights& weights, const FusionConfig& config) {
  return config.mode == FusionMode::kWeightedRrf
             ? fuse_rrf(sparse_hits, dense_hits, weights, config)
             : fuse_linear(sparse_hits, dense_hits, weights, config);
}

}  // namespace hybridrag
