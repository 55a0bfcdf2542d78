#include "hybridrag/generation.hpp"

#include <cstdlib>

#include "hybridrag/error.hpp"
#include "hybridrag/knowledge_base.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
  return role == Role::kUser ? "user" : "assistant";
}

void ChatSession::append_exchange(std::string question, std::string answer) {
  turns_.push_back({Role::kUser, std::move(question)});
  turns_.push_back({Role::kAssistant, std::move(answer)});
}

void GenerationParams::validate() const {
  if (!(temperature >= 0.0) || !(top_p > 0.0 && top_p <= 1.0) || top_k < 1 || max_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid generation parameters");
  }
}

std::string build_prompt(const ChatSession& session, std::span<const ContextPassage> passages,
                         std::string_view question, const PromptTemplate& prompt) {
  if (passages.size() > kMaxContextPassages) {
    throw Error(ErrorCode::kInvalidArgument, "at most 5 context passages");
  }
  std::string out;
  out += prompt.instruction;
  out += "\n\n### Chat history\n";
  if (session.turns().empty()) {
    out += "(none)\n";
  } else {
    for (const auto& turn : session.turns()) {
      out += turn.role == Role::kUser ? "User: " : "Assistant: ";
      out += turn.text;
      out += '\n';
    }
  }
  out += "\n### Context\n";
  if (passages.empty()) {
    out += kNoContextMarker;
    out += '\n';
  } else {
    for (const auto& p : passages) {
      out += '[';
      out += p.provenance;
      out += "]\n";
      out += p.text;
      out += "\n\n";
    }
  }
  out += "\n### Question\n";
  out += question;
  out += '\n';
  return out;
}

LlmEndpointConfig LlmEndpointConfig::from_env() {
  LlmEndpointConfig c;
  if (const char* v = std::getenv("HYBRIDRAG_LLM_URL")) c.base_url = v;
  if (const char* v = std::getenv("HYBRIDRAG_LLM_MODEL")) c.model = v;
  if (auto v = env_positive_int("HYBRIDRAG_LLM_TIMEOUT_S")) {
    c.timeout = std::chrono::seconds(static_cast<std::int64_t>(*v));
  }
  return c;
}

OllamaClient::OllamaClient(LlmEndpointConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) transport_ = std::make_shared<HttplibTransport>();
  while (!config_.base_url.empty() && config_.base_url.back() == '/') config_.base_url.pop_back();
}

json OllamaClient::request_body(const std::string& model, const std::string& prompt,
                                const GenerationParams& params) {
  return json{{"model", model},
              {"prompt", prompt},
              {"options",
               {{"temperature", params.temperature},
                {"top_p", params.top_p},
                {"top_k", params.top_k},
                {"num_predict", params.max_tokens}}},
              {"stream", false}};
}

std::string OllamaClient::complete(const std::string& prompt, const GenerationParams& params) {
  params.validate();
  HttpRequest req;
  req.url = config_.base_url + "/api/generate";
  req.body = request_body(config_.model, prompt, params).dump();
  req.timeout = config_.timeout;
  const auto resp = transport_->post(req);
  if (resp.status < 200 || resp.status >= 300) {
    throw Error(ErrorCode::kModelError, "generation endpoint returned status " +
                                            std::to_string(resp.status));
  }
  try {
    auto j = json::parse(resp.body);
    return j.at("response").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kModelError, "generation endpoint sent a malformed body");
  }
}

GroundedAnswer generate(const std::string& prompt, const GenerationParams& params,
                        LanguageModel& model) {
  const auto started = std::chrono::steady_clock::now();
  GroundedAnswer answer;
  answer.text = model.complete(prompt, params);
  answer.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return answer;
}

GroundedAnswer answer_query(const KnowledgeBase& kb, LanguageModel& model, ChatSession& session,
                            std::string_view question, const FusionWeights& weights,
                            const AnswerOptions& options) {
  auto fusion = options.fusion;
  fusion.k = std::min(fusion.k, kMaxContextPassages);
  const auto started = std::chrono::steady_clock::now();
  const auto hits = kb.retrieve(question, weights, fusion);
  std::vector<ContextPassage> passages;
  for (const auto& hit : hits) {
    if (auto c = kb.chunk(hit.chunk_id)) {
      passages.push_back({c->chunk_id, c->provenance, c->text});
    }
  }
  const auto prompt = build_prompt(session, passages, question, options.prompt);
  auto answer = generate(prompt, options.generation, model);
  answer.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  for (const auto& p : passages) answer.context_chunk_ids.push_back(p.chunk_id);
  answer.context = std::move(passages);
  session.append_exchange(std::string(question), answer.text);
  return answer;
}

}  // namespace hybridrag
