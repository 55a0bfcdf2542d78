#include "hybridrag/judge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hybridrag/config.hpp"
#include "hybridrag/error.hpp"
#include "hybridrag/ingest.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag::judge {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& why) {
  throw Error(ErrorCode::kMalformedVerdict, "malformed verdict: " + why);
}

std::optional<std::size_t> object_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

int score_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing ") + key);
  if (!it->is_number_integer()) malformed(std::string(key) + " must be an integer");
  auto v = it->get<std::int64_t>();
  if (v < 1 || v > 5) malformed(std::string(key) + " out of range");
  return static_cast<int>(v);
}

json verdict_to_json(const JudgeVerdict& v) {
  return json{{"query_id", v.query_id},
              {"hallucination", v.hallucination},
              {"faithfulness", v.faithfulness},
              {"confidence", v.confidence},
              {"unsupported_claims", v.unsupported_claims},
              {"retries_used", v.retries_used}};
}

void drop_torn_tail(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return;
  auto text = read_file(path);
  if (text.empty() || text.back() == '\n') return;
  auto keep = text.rfind('\n');
  std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

void append_line(const std::filesystem::path& path, const json& record) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write checkpoint");
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "cannot write checkpoint");
}

std::optional<JudgeVerdict> judge_with_retries(const JudgeSample& sample, JudgeClient& client,
                                               double temperature, int max_retries) {
  const auto prompt = build_judge_prompt(sample);
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    try {
      auto v = parse_verdict(client.judge(prompt, temperature));
      v.query_id = sample.query_id;
      v.retries_used = attempt;
      return v;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMalformedVerdict) throw;
    }
  }
  return std::nullopt;
}

}  // namespace

JudgeSample make_sample(std::string query_id, std::string question,
                        std::span<const ContextPassage> passages, std::string answer) {
  std::string context;
  const auto n = std::min(passages.size(), kMaxContextPassages);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) context += "\n\n";
    context += "[" + passages[i].provenance + "] " + passages[i].text;
  }
  return {std::move(query_id), std::move(question), std::move(context), std::move(answer)};
}

std::string build_judge_prompt(const JudgeSample& sample) {
  std::string out(kJudgePrompt);
  out += "\n\nQUESTION:\n";
  out += sample.question;
  out += "\n\nCONTEXT:\n";
  out += sample.context_text;
  out += "\n\nANSWER:\n";
  out += sample.answer_text;
  out += "\n";
  return out;
}

JudgeVerdict parse_verdict(std::string_view raw_text) {
  std::optional<json> obj;
  for (auto open = raw_text.find('{'); open != std::string_view::npos;
       open = raw_text.find('{', open + 1)) {
    auto close = object_end(raw_text, open);
    if (!close) continue;
    auto parsed = json::parse(raw_text.substr(open, *close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) {
      obj = std::move(parsed);
      break;
    }
  }
  if (!obj) malformed("no JSON object");
  for (const auto& [key, value] : obj->items()) {
    if (key != "hallucination" && key != "faithfulness" && key != "confidence" &&
        key != "unsupported_claims") {
      malformed("unexpected key " + key);
    }
  }
  JudgeVerdict v;
  auto h = obj->find("hallucination");
  if (h == obj->end()) malformed("missing hallucination");
  if (!h->is_boolean()) malformed("hallucination must be a boolean");
  v.hallucination = h->get<bool>();
  v.faithfulness = score_field(*obj, "faithfulness");
  v.confidence = score_field(*obj, "confidence");
  if (auto c = obj->find("unsupported_claims"); c != obj->end()) {
    if (!c->is_array()) malformed("unsupported_claims must be an array");
    for (const auto& claim : *c) {
      if (!claim.is_string()) malformed("unsupported_claims must hold strings");
      v.unsupported_claims.push_back(claim.get<std::string>());
    }
  }
  return v;
}

std::array<std::size_t, 3> tertile_quotas(std::size_t n) noexcept {
  std::array<std::size_t, 3> q{};
  for (std::size_t i = 0; i < 3; ++i) q[i] = n / 3 + (i < n % 3 ? 1 : 0);
  return q;
}

std::vector<eval::EvalQuery> stratify_sample(std::span<const eval::EvalQuery> queries,
                                             std::size_t n, std::uint64_t seed) {
  if (queries.size() < n) {
    throw Error(ErrorCode::kInsufficientQueries,
                "need " + std::to_string(n) + " queries, have " + std::to_string(queries.size()));
  }
  const std::size_t pool = queries.size();
  std::vector<std::size_t> lengths(pool);
  for (std::size_t i = 0; i < pool; ++i) lengths[i] = whitespace_tokens(queries[i].question).size();
  std::vector<std::size_t> order(pool);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lengths[a] != lengths[b]) return lengths[a] < lengths[b];
    return queries[a].query_id < queries[b].query_id;
  });

  const auto group_sizes = tertile_quotas(pool);
  const auto quotas = tertile_quotas(n);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::size_t offset = 0;
  for (std::size_t g = 0; g < 3; ++g) {
    std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                   order.begin() + static_cast<std::ptrdiff_t>(offset + group_sizes[g]));
    offset += group_sizes[g];
    for (std::size_t i = 0; i < quotas[g]; ++i) {
      auto j = i + static_cast<std::size_t>(uniform_index(rng, group.size() - i));
      std::swap(group[i], group[j]);
      chosen.push_back(group[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<eval::EvalQuery> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(queries[i]);
  return out;
}

JudgeEndpointConfig JudgeEndpointConfig::from_env() {
  JudgeEndpointConfig c;
  auto url = env_value("HYBRIDRAG_JUDGE_URL");
  if (!url) throw Error(ErrorCode::kEndpointUnavailable, "judge endpoint not configured");
  c.url = *url;
  c.model = env_value("HYBRIDRAG_JUDGE_MODEL").value_or("judge");
  c.api_key = env_value("HYBRIDRAG_JUDGE_API_KEY").value_or("");
  return c;
}

HttpJudgeClient::HttpJudgeClient(JudgeEndpointConfig config,
                                 std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::string HttpJudgeClient::judge(const std::string& prompt, double temperature) {
  HttpRequest req;
  req.url = config_.url;
  req.timeout = config_.timeout;
  req.body = json{{"model", config_.model}, {"prompt", prompt}, {"temperature", temperature}}.dump();
  if (!config_.api_key.empty()) req.headers.emplace_back("Authorization", "Bearer " + config_.api_key);
  auto res = transport_->post(req);
  if (res.status < 200 || res.status >= 300) {
    throw Error(ErrorCode::kEndpointUnavailable,
                "judge endpoint returned HTTP " + std::to_string(res.status));
  }
  auto body = json::parse(res.body, nullptr, false);
  if (body.is_object()) {
    for (const char* key : {"response", "text"}) {
      if (auto it = body.find(key); it != body.end() && it->is_string()) return *it;
    }
  }
  return res.body;
}

std::string_view to_string(JudgeRunStatus status) noexcept {
  switch (status) {
    case JudgeRunStatus::kCompleted: return "completed";
    case JudgeRunStatus::kBudgetExhausted: return "budget_exhausted";
    case JudgeRunStatus::kEndpointUnavailable: return "endpoint_unavailable";
  }
  return "unknown";
}

CheckpointState read_checkpoint(const std::filesystem::path& path) {
  CheckpointState state;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return state;
  std::set<std::string> seen;
  for (const auto& line : split(read_file(path), '\n')) {
    if (trim(line).empty()) continue;
    auto rec = json::parse(line, nullptr, false);
    if (!rec.is_object() || !rec.contains("query_id") || !rec["query_id"].is_string()) {
      spdlog::warn("ignoring unreadable checkpoint line");
      continue;
    }
    std::string id = rec["query_id"];
    if (!seen.insert(id).second) continue;
    if (rec.value("skipped", false)) {
      state.skipped.push_back(id);
      continue;
    }
    try {
      JudgeVerdict v;
      v.query_id = id;
      v.hallucination = rec.at("hallucination").get<bool>();
      v.faithfulness = rec.at("faithfulness").get<int>();
      v.confidence = rec.at("confidence").get<int>();
      v.unsupported_claims = rec.value("unsupported_claims", std::vector<std::string>{});
      v.retries_used = rec.value("retries_used", 0);
      state.verdicts.push_back(std::move(v));
    } catch (const json::exception&) {
      seen.erase(id);
      spdlog::warn("ignoring unreadable checkpoint line");
    }
  }
  return state;
}

JudgeRunResult run_judging(std::span<const JudgeSample> samples, JudgeClient& client,
                           const JudgeRunConfig& config) {
  if (config.cost_per_call_usd <= 0.0 || config.budget_usd < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "budget and cost must be positive");
  }
  if (config.max_retries < 0 || config.max_retries > 2) {
    throw Error(ErrorCode::kInvalidArgument, "max_retries must be in [0, 2]");
  }
  if (config.checkpoint.empty()) throw Error(ErrorCode::kInvalidArgument, "checkpoint path");
  const auto budget = std::llround(config.budget_usd * 1e6);
  const auto cost = std::llround(config.cost_per_call_usd * 1e6);

  drop_torn_tail(config.checkpoint);
  auto state = read_checkpoint(config.checkpoint);
  std::set<std::string> done;
  for (const auto& v : state.verdicts) done.insert(v.query_id);
  for (const auto& s : state.skipped) done.insert(s);

  JudgeRunResult result;
  auto finish = [&](JudgeRunStatus status) {
    result.status = status;
    result.verdicts = std::move(state.verdicts);
    result.skipped = std::move(state.skipped);
    return result;
  };

  for (const auto& sample : samples) {
    if (done.contains(sample.query_id)) continue;
    const auto prompt = build_judge_prompt(sample);
    bool recorded = false;
    for (int attempt = 0; attempt <= config.max_retries && !recorded; ++attempt) {
      if (static_cast<long long>(result.calls_made + 1) * cost > budget) {
        return finish(JudgeRunStatus::kBudgetExhausted);
      }
      ++result.calls_made;
      std::string raw;
      try {
        raw = client.judge(prompt, config.temperature);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kEndpointUnavailable || e.code() == ErrorCode::kTimeout) {
          return finish(JudgeRunStatus::kEndpointUnavailable);
        }
        throw;
      }
      try {
        auto v = parse_verdict(raw);
        v.query_id = sample.query_id;
        v.retries_used = attempt;
        append_line(config.checkpoint, verdict_to_json(v));
        state.verdicts.push_back(std::move(v));
        recorded = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kMalformedVerdict) throw;
      }
    }
    if (!recorded) {
      append_line(config.checkpoint, json{{"query_id", sample.query_id},
                                          {"skipped", true},
                                          {"retries_used", config.max_retries},
                                          {"reason", "malformed verdict"}});
      state.skipped.push_back(sample.query_id);
    }
    done.insert(sample.query_id);
  }
  return finish(JudgeRunStatus::kCompleted);
}

bool flag_hallucination(const JudgeVerdict& verdict) noexcept {
  return verdict.hallucination || !verdict.unsupported_claims.empty();
}

HallucinationReport aggregate(std::span<const JudgeVerdict> verdicts, std::size_t n_skipped) {
  if (verdicts.empty()) throw Error(ErrorCode::kEmptyInput, "no verdicts to aggregate");
  HallucinationReport r;
  r.n_judged = verdicts.size();
  r.n_skipped = n_skipped;
  double faith = 0.0;
  double conf = 0.0;
  for (const auto& v : verdicts) {
    if (flag_hallucination(v)) ++r.n_flagged;
    faith += v.faithfulness;
    conf += v.confidence;
  }
  const double n = static_cast<double>(r.n_judged);
  r.hallucination_rate = static_cast<double>(r.n_flagged) / n;
  r.success_rate = 1.0 - r.hallucination_rate;
  r.mean_faithfulness = faith / n;
  r.mean_confidence = conf / n;
  return r;
}

AgreementReport agreement_check(std::span<const JudgeSample> samples, JudgeClient& client,
                                std::array<double, 2> temperatures, int max_retries) {
  AgreementReport r;
  std::size_t label = 0, exact = 0, within = 0;
  for (const auto& s : samples) {
    auto a = judge_with_retries(s, client, temperatures[0], max_retries);
    auto b = judge_with_retries(s, client, temperatures[1], max_retries);
    if (!a || !b) continue;
    ++r.n_compared;
    if (flag_hallucination(*a) == flag_hallucination(*b)) ++label;
    if (a->faithfulness == b->faithfulness) ++exact;
    if (std::abs(a->faithfulness - b->faithfulness) <= 1) ++within;
  }
  if (r.n_compared == 0) throw Error(ErrorCode::kEmptyInput, "no samples could be compared");
  const double n = static_cast<double>(r.n_compared);
  r.label_agreement = static_cast<double>(label) / n;
  r.exact_faithfulness_agreement = static_cast<double>(exact) / n;
  r.within_1_agreement = static_cast<double>(within) / n;
  return r;
}

std::string judge_report_csv(std::string_view dataset, const HallucinationReport& report,
                             std::span<const JudgeVerdict> verdicts, JudgeRunStatus status,
                             std::uint64_t seed) {
  std::vector<double> flags;
  flags.reserve(verdicts.size());
  for (const auto& v : verdicts) flags.push_back(flag_hallucination(v) ? 1.0 : 0.0);
  auto wilson = eval::wilson_interval(report.n_flagged, report.n_judged);
  auto boot = eval::bootstrap_ci(flags, 1000, seed);
  std::ostringstream os;
  os << kJudgeReportHeader << '\n'
     << dataset << ',' << report.n_judged << ',' << report.n_skipped << ',' << report.n_flagged
     << ',' << format_fixed(report.hallucination_rate) << ',' << format_fixed(wilson.lo) << ','
     << format_fixed(wilson.hi) << ',' << format_fixed(boot.lo) << ',' << format_fixed(boot.hi)
     << ',' << format_fixed(report.mean_faithfulness) << ','
     << format_fixed(report.mean_confidence) << ',' << format_fixed(report.success_rate) << ','
     << to_string(status) << '\n';
  return os.str();
}

}  // namespace hybridrag::judge
