#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridrag/eval/dataset.hpp"
#include "hybridrag/types.hpp"

namespace hybridrag::eval {

inline constexpr std::array<std::size_t, 4> kRecallCutoffs{1, 3, 5, 10};
inline constexpr std::size_t kCoverageDepth = 10;

/// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace.
std::string normalize_answer(std::string_view text);

/// True iff a normalized gold answer occurs in the normalized concatenation
/// of the given texts. Callers pass the top-K chunk texts.
bool answer_coverage_flag(std::span<const std::string> texts,
                          std::span<const std::string> gold_answers);

/// Key match when the query has relevant keys; otherwise a normalized gold
/// answer substring match against the chunk text.
bool relevance(std::span<const std::string> hit_doc_keys, std::string_view chunk_text,
               const EvalQuery& query);

/// True iff some normalized gold answer equals the whole normalized text
/// or occurs in it as a run of whole tokens.
bool token_span_match(std::string_view text, std::span<const std::string> gold_answers);

struct QueryResult {
  std::string query_id;
  std::vector<RetrievedHit> hits;
  std::optional<std::size_t> first_relevant_rank;
  bool answer_covered = false;
  bool exact_match = false;
};

struct MetricReport {
  std::map<std::size_t, double> recall_at;
  double mrr = 0.0;
  std::optional<double> mean_rank;
  std::optional<double> median_rank;
  std::size_t rank1_count = 0;
  double em = 0.0;
  double answer_coverage = 0.0;
  std::size_t n_queries = 0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Throws Error(kEmptyResults) on an empty input.
MetricReport compute_metrics(std::span<const QueryResult> results);

}  // namespace hybridrag::eval
