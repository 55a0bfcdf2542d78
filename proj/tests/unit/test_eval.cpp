#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hybridrag/error.hpp"
#include "hybridrag/eval/dataset.hpp"
#include "hybridrag/eval/metrics.hpp"
#include "hybridrag/eval/stats.hpp"
#include "hybridrag/util.hpp"
#include "support.hpp"

using namespace hybridrag;
using namespace hybridrag::eval;

namespace {

QueryResult with_rank(std::optional<std::size_t> rank, bool covered = false, bool em = false) {
  QueryResult r;
  r.query_id = "q";
  r.first_relevant_rank = rank;
  r.answer_covered = covered;
  r.exact_match = em;
  return r;
}

struct Brute {
  double mrr = 0, r1 = 0, r3 = 0, r5 = 0, r10 = 0, em = 0, cov = 0;
  std::optional<double> mean, median;
  std::size_t rank1 = 0;
};

Brute brute(const std::vector<QueryResult>& rs) {
  Brute b;
  std::vector<double> found;
  for (const auto& r : rs) {
    if (r.first_relevant_rank) {
      double k = static_cast<double>(*r.first_relevant_rank);
      b.mrr += 1.0 / k;
      b.r1 += k <= 1;
      b.r3 += k <= 3;
      b.r5 += k <= 5;
      b.r10 += k <= 10;
      b.rank1 += k == 1;
      found.push_back(k);
    }
    b.em += r.exact_match;
    b.cov += r.answer_covered;
  }
  double n = static_cast<double>(rs.size());
  for (double* v : {&b.mrr, &b.r1, &b.r3, &b.r5, &b.r10, &b.em, &b.cov}) *v /= n;
  if (!found.empty()) {
    double s = 0;
    for (double f : found) s += f;
    b.mean = s / static_cast<double>(found.size());
    std::sort(found.begin(), found.end());
    auto m = found.size();
    b.median = m % 2 ? found[m / 2] : (found[m / 2 - 1] + found[m / 2]) / 2;
  }
  return b;
}

double wilson_oracle_hi(double s, double n, double z) {
  double p = s / n;
  return (p + z * z / (2 * n) + z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / (1 + z * z / n);
}

double wilson_oracle_lo(double s, double n, double z) {
  double p = s / n;
  return (p + z * z / (2 * n) - z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / (1 + z * z / n);
}

std::vector<double> bernoulli(std::size_t ones, std::size_t n, std::uint64_t seed) {
  std::vector<double> v(n, 0.0);
  std::fill(v.begin(), v.begin() + static_cast<long>(ones), 1.0);
  std::mt19937_64 rng(seed);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

}  // namespace

TEST(Dataset, SquadMini) {
  auto ds = load_dataset(support::fixture("squad_mini.json"), DatasetFormat::kSquadJson);
  EXPECT_EQ(ds.name, "squad_mini");
  ASSERT_EQ(ds.queries.size(), 1u);
  EXPECT_EQ(ds.queries[0].query_id, "sq1");
  EXPECT_EQ(ds.queries[0].gold_answers, std::vector<std::string>{"the Champ de Mars"});
  EXPECT_EQ(ds.queries[0].relevant_doc_keys, std::vector<std::string>{"Paris/0"});
  ASSERT_EQ(ds.passages.size(), 1u);
  EXPECT_EQ(ds.passages[0].key, "Paris/0");
}

TEST(Dataset, JsonlOrderPreserved) {
  auto ds = load_dataset(support::fixture("generic.jsonl"), DatasetFormat::kJsonlGeneric);
  ASSERT_EQ(ds.queries.size(), 3u);
  EXPECT_EQ(ds.queries[0].query_id, "g1");
  EXPECT_EQ(ds.queries[1].query_id, "g2");
  EXPECT_EQ(ds.queries[2].query_id, "g3");
  EXPECT_EQ(ds.passages.size(), 3u);
}

TEST(Dataset, TsvTriples) {
  auto ds = load_dataset(support::fixture("triples.tsv"), DatasetFormat::kTsvTriples);
  ASSERT_EQ(ds.queries.size(), 2u);
  EXPECT_EQ(ds.queries[0].query_id, "q1");
  EXPECT_EQ(ds.queries[1].gold_answers, (std::vector<std::string>{"William Shakespeare", "Shakespeare"}));
  EXPECT_EQ(ds.queries[0].relevant_doc_keys.at(0),
            "p" + sha256_hex("Water boils at 100 degrees Celsius at sea level.").substr(0, 16));
  EXPECT_GE(ds.passages.size(), 4u);
}

TEST(Dataset, MalformedRecordNamesIndex) {
  std::string text =
      "{\"key\":\"a\",\"text\":\"x\"}\n"
      "{\"query_id\":\"q1\",\"question\":\"?\",\"gold_answers\":[\"x\"]}\n"
      "{\"query_id\":\"q2\"}\n";
  try {
    parse_dataset(text, DatasetFormat::kJsonlGeneric, "t");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("record 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_dataset("{\"data\": 5}", DatasetFormat::kSquadJson, "t"), Error);
  EXPECT_THROW(parse_dataset("only one field\n", DatasetFormat::kTsvTriples, "t"), Error);
  try {
    load_dataset("/nonexistent/file.jsonl", DatasetFormat::kJsonlGeneric);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
  EXPECT_EQ(guess_dataset_format("x.tsv"), DatasetFormat::kTsvTriples);
  EXPECT_EQ(parse_dataset_format("squad_json"), DatasetFormat::kSquadJson);
  EXPECT_FALSE(parse_dataset_format("csv").has_value());
}

TEST(Metrics, NormalizeAnswer) {
  EXPECT_EQ(normalize_answer("The Eiffel Tower!"), "eiffel tower");
  EXPECT_EQ(normalize_answer(""), "");
  EXPECT_EQ(normalize_answer("a  b"), "b");
  EXPECT_EQ(normalize_answer("  An apple,  THE pear. "), "apple pear");
  EXPECT_EQ(normalize_answer("theatre"), "theatre");
}

TEST(Metrics, Relevance) {
  EvalQuery keyed{"q", "?", {"Paris"}, {"doc7"}};
  std::vector<std::string> keys{"doc7"};
  EXPECT_TRUE(relevance(keys, "nothing", keyed));
  std::vector<std::string> other{"doc8"};
  EXPECT_FALSE(relevance(other, "paris is here", keyed));
  EvalQuery unkeyed{"q", "?", {"Paris"}, {}};
  EXPECT_TRUE(relevance(other, "the city of paris is large", unkeyed));
  EXPECT_FALSE(relevance(other, "london", unkeyed));
}

TEST(Metrics, AnswerCoverage) {
  std::vector<std::string> texts{"alpha", "beta", "the Champ-de Mars? maybe", "delta"};
  std::vector<std::string> gold{"Champ de Mars"};
  EXPECT_FALSE(answer_coverage_flag(texts, gold));
  std::vector<std::string> texts2{"alpha", "beta", "It stands on THE CHAMP DE MARS.", "delta"};
  EXPECT_TRUE(answer_coverage_flag(texts2, gold));
  std::vector<std::string> absent{"gamma"};
  EXPECT_FALSE(answer_coverage_flag(absent, gold));
  EXPECT_TRUE(token_span_match("built on the champ de mars in 1889", gold));
  std::vector<std::string> short_gold{"mar"};
  EXPECT_FALSE(token_span_match("champ de mars", short_gold));
}

TEST(Metrics, WorkedExample) {
  std::vector<QueryResult> rs{with_rank(1), with_rank(std::nullopt), with_rank(4)};
  auto m = compute_metrics(rs);
  EXPECT_NEAR(m.mrr, 1.25 / 3, 1e-15);
  EXPECT_NEAR(m.recall_at.at(10), 2.0 / 3, 1e-15);
  EXPECT_EQ(m.rank1_count, 1u);
  EXPECT_DOUBLE_EQ(m.mean_rank.value(), 2.5);
  EXPECT_DOUBLE_EQ(m.median_rank.value(), 2.5);
  EXPECT_EQ(m.n_queries, 3u);
}

TEST(Metrics, DegenerateCases) {
  std::vector<QueryResult> ones(5, with_rank(1, true, true));
  auto a = compute_metrics(ones);
  EXPECT_DOUBLE_EQ(a.mrr, 1.0);
  EXPECT_DOUBLE_EQ(a.recall_at.at(1), 1.0);
  EXPECT_DOUBLE_EQ(a.em, 1.0);
  std::vector<QueryResult> none(4, with_rank(std::nullopt));
  auto b = compute_metrics(none);
  EXPECT_DOUBLE_EQ(b.mrr, 0.0);
  for (auto k : kRecallCutoffs) EXPECT_DOUBLE_EQ(b.recall_at.at(k), 0.0);
  EXPECT_FALSE(b.mean_rank.has_value());
  EXPECT_FALSE(b.median_rank.has_value());
  try {
    compute_metrics(std::vector<QueryResult>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyResults);
  }
}

TEST(Metrics, MatchesBruteForceOnRandomResults) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<QueryResult> rs;
    auto n = 1 + rng() % 25;
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<std::size_t> rank;
      if (rng() % 4) rank = 1 + rng() % 10;
      rs.push_back(with_rank(rank, rng() % 2, rng() % 3 == 0));
    }
    auto m = compute_metrics(rs);
    auto b = brute(rs);
    EXPECT_DOUBLE_EQ(m.mrr, b.mrr);
    EXPECT_DOUBLE_EQ(m.recall_at.at(1), b.r1);
    EXPECT_DOUBLE_EQ(m.recall_at.at(3), b.r3);
    EXPECT_DOUBLE_EQ(m.recall_at.at(5), b.r5);
    EXPECT_DOUBLE_EQ(m.recall_at.at(10), b.r10);
    EXPECT_DOUBLE_EQ(m.em, b.em);
    EXPECT_DOUBLE_EQ(m.answer_coverage, b.cov);
    EXPECT_EQ(m.rank1_count, b.rank1);
    EXPECT_EQ(m.mean_rank.has_value(), b.mean.has_value());
    if (b.mean) {
      EXPECT_DOUBLE_EQ(*m.mean_rank, *b.mean);
      EXPECT_DOUBLE_EQ(*m.median_rank, *b.median);
    }
    double prev = 0;
    for (auto k : kRecallCutoffs) {
      EXPECT_GE(m.recall_at.at(k), prev);
      prev = m.recall_at.at(k);
    }
    EXPECT_LE(m.mrr, m.recall_at.at(10) + 1e-15);
    EXPECT_GE(m.recall_at.at(1) + 1e-15, static_cast<double>(m.rank1_count) / n);
  }
}

TEST(Stats, BootstrapConstantIsZeroWidth) {
  std::vector<double> v(40, 0.7);
  auto ci = bootstrap_ci(v, 1000, 3);
  EXPECT_DOUBLE_EQ(ci.lo, 0.7);
  EXPECT_DOUBLE_EQ(ci.hi, 0.7);
  EXPECT_DOUBLE_EQ(ci.point, 0.7);
  EXPECT_EQ(ci.n_resamples, 1000u);
  EXPECT_EQ(ci.method, CiMethod::kBootstrapPercentile);
  try {
    bootstrap_ci(std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
}

TEST(Stats, BootstrapHalfWidthNearNormalApproximation) {
  auto v = bernoulli(250, 500, 5);
  auto ci = bootstrap_ci(v, 1000, 42);
  double analytic = 1.96 * std::sqrt(0.25 / 500);
  EXPECT_NEAR(analytic, 0.0438, 5e-5);
  double half = (ci.hi - ci.lo) / 2;
  EXPECT_LT(std::abs(half - analytic), 0.2 * analytic) << half;
  EXPECT_DOUBLE_EQ(ci.point, 0.5);
  auto other = bootstrap_ci(v, 1000, 43);
  EXPECT_LT(std::abs(other.lo - ci.lo), 0.005);
  EXPECT_LT(std::abs(other.hi - ci.hi), 0.005);
  auto again = bootstrap_ci(v, 1000, 42);
  EXPECT_EQ(again.lo, ci.lo);
  EXPECT_EQ(again.hi, ci.hi);
}

TEST(Stats, WilsonMatchesFormula) {
  auto zero = wilson_interval(0, 100);
  EXPECT_DOUBLE_EQ(zero.lo, 0.0);
  EXPECT_NEAR(zero.hi, 0.0370, 5e-5);
  auto half = wilson_interval(50, 100);
  EXPECT_NEAR((half.lo + half.hi) / 2, 0.5, 1e-12);
  EXPECT_NEAR((half.hi - half.lo) / 2, 0.096, 5e-4);
  EXPECT_DOUBLE_EQ(wilson_interval(100, 100).hi, 1.0);
  EXPECT_EQ(half.method, CiMethod::kWilson);
  for (std::size_t s : {1u, 7u, 33u, 80u, 99u}) {
    auto w = wilson_interval(s, 100);
    EXPECT_NEAR(w.lo, wilson_oracle_lo(s, 100, 1.96), 1e-12);
    EXPECT_NEAR(w.hi, wilson_oracle_hi(s, 100, 1.96), 1e-12);
    EXPECT_LE(w.lo, w.point);
    EXPECT_LE(w.point, w.hi);
  }
  EXPECT_THROW(wilson_interval(3, 2), Error);
  EXPECT_THROW(wilson_interval(0, 0), Error);
}

TEST(Stats, BootstrapAgreesWithWilsonOnBinaryData) {
  for (double p : {0.05, 0.2, 0.5, 0.8, 0.95}) {
    auto ones = static_cast<std::size_t>(std::lround(p * 500));
    auto v = bernoulli(ones, 500, 17);
    auto b = bootstrap_ci(v, 1000, 7);
    auto w = wilson_interval(ones, 500);
    EXPECT_LT(std::abs(b.lo - w.lo), 0.01) << p;
    EXPECT_LT(std::abs(b.hi - w.hi), 0.01) << p;
  }
}
