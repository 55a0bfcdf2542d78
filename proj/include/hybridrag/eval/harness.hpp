#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridrag/eval/dataset.hpp"
#include "hybridrag/eval/metrics.hpp"
#include "hybridrag/eval/stats.hpp"
#include "hybridrag/fusion.hpp"
#include "hybridrag/knowledge_base.hpp"

namespace hybridrag::eval {

struct HarnessOptions {
  /// fusion.k is the evaluated cutoff; ranks beyond it count as not found.
  FusionConfig fusion{FusionMode::kWeightedRrf, 60, 10};
  std::size_t coverage_depth = kCoverageDepth;
};

/// Indexes a dataset's passages (one text document per passage) and caches
/// both retrieval legs for every query, so weight configurations differ
/// only in the fusion step.
class EvalHarness {
 public:
  EvalHarness(Dataset dataset, std::shared_ptr<CachedEmbedder> embedder,
              KnowledgeBaseConfig kb_config = {}, HarnessOptions options = {});

  const Dataset& dataset() const noexcept { return dataset_; }
  const KnowledgeBase& knowledge_base() const noexcept { return *kb_; }
  const HarnessOptions& options() const noexcept { return options_; }

  std::vector<QueryResult> run_fused(const FusionWeights& weights) const;
  /// Single leg (kSparse or kDense) truncated to the cutoff, no fusion.
  std::vector<QueryResult> run_leg(HitSource leg) const;

  /// Passage keys of the document a chunk belongs to.
  std::span<const std::string> doc_keys_of(std::string_view chunk_id) const;
  QueryResult score(const EvalQuery& query, std::vector<RetrievedHit> hits) const;

 private:
  Dataset dataset_;
  HarnessOptions options_;
  std::unique_ptr<KnowledgeBase> kb_;
  std::map<std::string, std::vector<std::string>, std::less<>> doc_keys_;
  std::vector<LegResults> legs_;
};

struct SweepRow {
  double weight = 0.0;
  MetricReport report;
  std::vector<QueryResult> results;
};

/// 0.1, 0.2, ..., 1.0 computed as i / 10.
std::vector<double> default_sweep_weights();
std::vector<SweepRow> weight_sweep(const EvalHarness& harness, std::span<const double> weights);

struct AblationRow {
  std::string mode;
  FusionWeights weights;
  MetricReport report;
  std::vector<QueryResult> results;
};

/// sparse (BM25 leg alone), dense (vector leg alone), hybrid (0.3 / 0.7).
std::vector<AblationRow> ablation(const EvalHarness& harness,
                                  FusionWeights hybrid = FusionWeights{0.3, 0.7});

inline constexpr std::string_view kSweepHeader =
    "weight,mrr,recall@1,recall@3,recall@5,recall@10,em,answer_coverage,mean_rank,median_rank,"
    "rank1_count,n";
inline constexpr std::string_view kAblationHeader =
    "mode,sparse_w,dense_w,mrr,recall@1,recall@3,recall@5,recall@10,em,answer_coverage,mean_rank,"
    "median_rank,rank1_count,n";
inline constexpr std::string_view kPerQueryHeader =
    "query_id,first_relevant_rank,reciprocal_rank,hit@1,hit@3,hit@5,hit@10,answer_covered,"
    "exact_match";

std::string sweep_csv(std::span<const SweepRow> rows);
std::string ablation_csv(std::span<const AblationRow> rows);
std::string per_query_csv(std::span<const QueryResult> results);

/// "{dataset}_{mode}_seed{seed}.csv" with dataset and mode reduced to
/// [A-Za-z0-9._-].
std::string result_filename(std::string_view dataset, std::string_view mode, std::uint64_t seed,
                            std::string_view extension = ".csv");

/// Numeric column of a CSV with a header row. Throws Error(kParseError).
std::vector<double> csv_column(std::string_view csv_text, std::string_view column);

inline constexpr std::string_view kBootstrapHeader = "metric,method,point,lo,hi,n_resamples,n";
/// Bootstrap row, plus a Wilson row when every value is 0 or 1.
std::string bootstrap_csv(std::string_view metric, std::span<const double> values,
                          std::size_t n_resamples, std::uint64_t seed);

struct OptimalWeight {
  std::vector<double> per_dataset;
  double overall = 0.0;
};

/// Per dataset: argmax over weights of the mean of min-max normalized MRR,
/// Recall@10 and answer coverage (a constant column contributes 0). Overall:
/// the most frequent per-dataset winner. Ties go to the lower weight.
OptimalWeight select_optimal_weight(std::span<const std::vector<SweepRow>> per_dataset);

struct ReferenceRow {
  std::string dataset;
  std::string method;
  double mrr = 0.0;
  double recall_at_10 = 0.0;
  double answer_coverage = 0.0;
  std::optional<double> mean_rank;
};

/// Header: dataset,method,mrr,recall@10,answer_coverage,mean_rank.
std::vector<ReferenceRow> parse_reference_csv(std::string_view csv_text);

inline constexpr double kRecallDriftThreshold = 0.015;
inline constexpr double kMrrDriftThreshold = 0.01;

struct DiscrepancyNote {
  std::string dataset;
  std::string method;
  std::string metric;
  double observed = 0.0;
  double reference = 0.0;
  bool exceeds = false;
};

/// Lowercased ASCII letters and digits only: "MS MARCO" and "ms_marco" match.
std::string dataset_match_key(std::string_view name);

/// Compares ablation rows against reference rows with the same dataset
/// (by dataset_match_key) and method (case-insensitive), on Recall@10 and MRR.
std::vector<DiscrepancyNote> discrepancy_notes(std::string_view dataset,
                                               std::span<const AblationRow> rows,
                                               std::span<const ReferenceRow> reference);
inline constexpr std::string_view kDiscrepancyHeader =
    "dataset,method,metric,observed,reference,abs_diff,threshold,investigate";
std::string discrepancy_csv(std::span<const DiscrepancyNote> notes);

}  // namespace hybridrag::eval
