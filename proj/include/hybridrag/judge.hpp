#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridrag/eval/dataset.hpp"
#include "hybridrag/eval/stats.hpp"
#include "hybridrag/generation.hpp"
#include "hybridrag/http_transport.hpp"

namespace hybridrag::judge {

struct JudgeSample {
  std::string query_id;
  std::string question;
  std::string context_text;
  std::string answer_text;
};

/// Concatenates up to five passages as "[provenance] text" blocks.
JudgeSample make_sample(std::string query_id, std::string question,
                        std::span<const ContextPassage> passages, std::string answer);

struct JudgeVerdict {
  std::string query_id;
  bool hallucination = false;
  int faithfulness = 0;
  int confidence = 0;
  std::vector<std::string> unsupported_claims;
  int retries_used = 0;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

inline constexpr std::string_view kJudgePrompt =
    "SYSTEM: You are a meticulous fact-checker.\n"
    "Given QUESTION, CONTEXT (retrieved passages), and ANSWER:\n"
    "1. Is ANSWER fully supported by CONTEXT? (Yes/Partially/No)\n"
    "2. List unsupported claims if any.\n"
    "3. Provide a faithfulness score 1-5 (5 = fully grounded).\n"
    "4. Provide a confidence score 1-5 reflecting certainty.\n"
    "Return JSON: {\"hallucination\": true|false, \"faithfulness\": int, \"confidence\": int}";

/// kJudgePrompt followed by QUESTION, CONTEXT and ANSWER sections.
std::string build_judge_prompt(const JudgeSample& sample);

/// Takes the first JSON object embedded in raw_text. It must hold
/// "hallucination" (bool), "faithfulness" and "confidence" (integers 1..5)
/// and may hold "unsupported_claims" (array of strings); any other key is
/// rejected. Throws Error(kMalformedVerdict). query_id is left empty.
JudgeVerdict parse_verdict(std::string_view raw_text);

/// Per-tertile draw counts: floor(n/3) each, remainder to the shortest
/// tertiles first.
std::array<std::size_t, 3> tertile_quotas(std::size_t n) noexcept;

/// Sorts the pool by (whitespace token count, query_id), cuts it into three
/// rank tertiles and draws tertile_quotas(n) from each without replacement.
/// Output keeps pool order. Throws Error(kInsufficientQueries).
std::vector<eval::EvalQuery> stratify_sample(std::span<const eval::EvalQuery> queries,
                                             std::size_t n = 500, std::uint64_t seed = 0);

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Raw model text. Throws Error(kEndpointUnavailable) or Error(kTimeout).
  virtual std::string judge(const std::string& prompt, double temperature) = 0;
};

struct JudgeEndpointConfig {
  std::string url;
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};

  /// HYBRIDRAG_JUDGE_URL, HYBRIDRAG_JUDGE_MODEL, HYBRIDRAG_JUDGE_API_KEY.
  /// Throws Error(kEndpointUnavailable) when no URL is configured.
  static JudgeEndpointConfig from_env();
};

/// Generic JSON endpoint: POST {"model", "prompt", "temperature"} with an
/// optional bearer key; the reply's "response" (or "text") string is the
/// judge output.
class HttpJudgeClient final : public JudgeClient {
 public:
  HttpJudgeClient(JudgeEndpointConfig config, std::shared_ptr<HttpTransport> transport);
  std::string judge(const std::string& prompt, double temperature) override;

 private:
  JudgeEndpointConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

struct JudgeRunConfig {
  double budget_usd = 50.0;
  double cost_per_call_usd = 0.01;
  int max_retries = 2;
  double temperature = 0.0;
  std::filesystem::path checkpoint;
};

enum class JudgeRunStatus { kCompleted, kBudgetExhausted, kEndpointUnavailable };
std::string_view to_string(JudgeRunStatus status) noexcept;

struct JudgeRunResult {
  JudgeRunStatus status = JudgeRunStatus::kCompleted;
  /// Every verdict in the checkpoint after the run, in checkpoint order.
  std::vector<JudgeVerdict> verdicts;
  std::vector<std::string> skipped;
  std::size_t calls_made = 0;
};

/// Judges samples not yet in the checkpoint, appending each verdict or
/// skipped marker as soon as it is known. A call is issued only while
/// (calls + 1) * cost_per_call <= budget for this run. Malformed replies are
/// re-queried up to max_retries times, then the sample is marked skipped.
/// Transport failures stop the run with status kEndpointUnavailable.
JudgeRunResult run_judging(std::span<const JudgeSample> samples, JudgeClient& client,
                           const JudgeRunConfig& config);

struct CheckpointState {
  std::vector<JudgeVerdict> verdicts;
  std::vector<std::string> skipped;
};
CheckpointState read_checkpoint(const std::filesystem::path& path);

bool flag_hallucination(const JudgeVerdict& verdict) noexcept;

struct HallucinationReport {
  double hallucination_rate = 0.0;
  double mean_faithfulness = 0.0;
  double mean_confidence = 0.0;
  double success_rate = 0.0;
  std::size_t n_judged = 0;
  std::size_t n_skipped = 0;
  std::size_t n_flagged = 0;
};

/// Throws Error(kEmptyInput) without verdicts.
HallucinationReport aggregate(std::span<const JudgeVerdict> verdicts, std::size_t n_skipped = 0);

struct AgreementReport {
  double label_agreement = 0.0;
  double exact_faithfulness_agreement = 0.0;
  double within_1_agreement = 0.0;
  std::size_t n_compared = 0;
};

/// Judges every sample at both temperatures and compares the two verdicts.
/// Samples that stay malformed after retries at either temperature are left
/// out of the comparison.
AgreementReport agreement_check(std::span<const JudgeSample> samples, JudgeClient& client,
                                std::array<double, 2> temperatures = {0.0, 0.2},
                                int max_retries = 2);

inline constexpr std::string_view kJudgeReportHeader =
    "dataset,n_judged,n_skipped,n_flagged,hallucination_rate,wilson_lo,wilson_hi,bootstrap_lo,"
    "bootstrap_hi,mean_faithfulness,mean_confidence,success_rate,status";
std::string judge_report_csv(std::string_view dataset, const HallucinationReport& report,
                             std::span<const JudgeVerdict> verdicts, JudgeRunStatus status,
                             std::uint64_t seed);

}  // namespace hybridrag::judge
