#include "hybridrag/eval/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "hybridrag/error.hpp"

namespace hybridrag::eval {

namespace {

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

bool contains_normalized(std::string_view haystack, std::span<const std::string> gold) {
  for (const auto& g : gold) {
    auto n = normalize_answer(g);
    if (!n.empty() && haystack.find(n) != std::string_view::npos) return true;
  }
  return false;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (unsigned char c : text) {
    if (c < 0x80 && std::ispunct(c)) continue;
    stripped.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  std::string out;
  std::size_t i = 0;
  while (i < stripped.size()) {
    while (i < stripped.size() && std::isspace(static_cast<unsigned char>(stripped[i]))) ++i;
    std::size_t j = i;
    while (j < stripped.size() && !std::isspace(static_cast<unsigned char>(stripped[j]))) ++j;
    if (j > i) {
      std::string_view word(stripped.data() + i, j - i);
      if (!is_article(word)) {
        if (!out.empty()) out.push_back(' ');
        out.append(word);
      }
    }
    i = j;
  }
  return out;
}

bool answer_coverage_flag(std::span<const std::string> texts,
                          std::span<const std::string> gold_answers) {
  std::string joined;
  for (const auto& t : texts) {
    joined.append(t);
    joined.push_back(' ');
  }
  return contains_normalized(normalize_answer(joined), gold_answers);
}

bool relevance(std::span<const std::string> hit_doc_keys, std::string_view chunk_text,
               const EvalQuery& query) {
  if (!query.relevant_doc_keys.empty()) {
    for (const auto& k : hit_doc_keys) {
      if (std::find(query.relevant_doc_keys.begin(), query.relevant_doc_keys.end(), k) !=
          query.relevant_doc_keys.end()) {
        return true;
      }
    }
    return false;
  }
  return contains_normalized(normalize_answer(chunk_text), query.gold_answers);
}

bool token_span_match(std::string_view text, std::span<const std::string> gold_answers) {
  const std::string padded = " " + normalize_answer(text) + " ";
  for (const auto& g : gold_answers) {
    auto n = normalize_answer(g);
    if (!n.empty() && padded.find(" " + n + " ") != std::string::npos) return true;
  }
  return false;
}

MetricReport compute_metrics(std::span<const QueryResult> results) {
  if (results.empty()) throw Error(ErrorCode::kEmptyResults, "no query results");
  MetricReport r;
  r.n_queries = results.size();
  const double n = static_cast<double>(results.size());
  std::vector<std::size_t> found;
  std::size_t em = 0;
  std::size_t covered = 0;
  double rr_sum = 0.0;
  for (const auto& q : results) {
    if (q.exact_match) ++em;
    if (q.answer_covered) ++covered;
    if (!q.first_relevant_rank) continue;
    const std::size_t rank = *q.first_relevant_rank;
    if (rank == 0) throw Error(ErrorCode::kInvalidArgument, "ranks are 1-based");
    found.push_back(rank);
    rr_sum += 1.0 / static_cast<double>(rank);
    if (rank == 1) ++r.rank1_count;
  }
  for (std::size_t k : kRecallCutoffs) {
    auto hits = std::count_if(found.begin(), found.end(), [k](std::size_t rank) { return rank <= k; });
    r.recall_at[k] = static_cast<double>(hits) / n;
  }
  r.mrr = rr_sum / n;
  r.em = static_cast<double>(em) / n;
  r.answer_coverage = static_cast<double>(covered) / n;
  if (!found.empty()) {
    double sum = 0.0;
    for (auto rank : found) sum += static_cast<double>(rank);
    r.mean_rank = sum / static_cast<double>(found.size());
    std::sort(found.begin(), found.end());
    const std::size_t m = found.size() / 2;
    r.median_rank = found.size() % 2 == 1
                        ? static_cast<double>(found[m])
                        : (static_cast<double>(found[m - 1]) + static_cast<double>(found[m])) / 2.0;
  }
  return r;
}

}  // namespace hybridrag::eval
