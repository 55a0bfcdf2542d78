#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hybridrag/fusion.hpp"
#include "hybridrag/http_transport.hpp"

namespace hybridrag {

class KnowledgeBase;

enum class Role { kUser, kAssistant };
std::string_view to_string(Role role) noexcept;

struct Turn {
  Role role = Role::kUser;
  std::string text;
};

/// Append-only conversation. Turns alternate user/assistant starting with
/// the user, so the history always has even length.
class ChatSession {
 public:
  explicit ChatSession(std::string session_id = {}) : session_id_(std::move(session_id)) {}

  const std::string& session_id() const noexcept { return session_id_; }
  const std::vector<Turn>& turns() const noexcept { return turns_; }
  void append_exchange(std::string question, std::string answer);
  void reset() { turns_.clear(); }

 private:
  std::string session_id_;
  std::vector<Turn> turns_;
};

struct GenerationParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int top_k = 40;
  int max_tokens = 1024;

  void validate() const;
};

/// Wording of the grounding instruction. Versioned so runs can record which
/// prompt they used.
struct PromptTemplate {
  std::string version = "grounded-v1";
  std::string instruction =
      "Answer the question using only the information in the context passages below. "
      "If the context does not contain the answer, say that you do not know. "
      "Cite the source identifiers of the passages you rely on.";
};

struct ContextPassage {
  std::string chunk_id;
  std::string provenance;
  std::string text;
};

constexpr std::size_t kMaxContextPassages = 5;
constexpr std::string_view kNoContextMarker = "No context found.";

/// Lays out the instruction, then "Chat history", "Context" and "Question"
/// sections in that order. Each passage is prefixed with its provenance in
/// brackets. With no passages the context section says kNoContextMarker.
/// Throws Error(kInvalidArgument) for more than kMaxContextPassages passages.
std::string build_prompt(const ChatSession& session, std::span<const ContextPassage> passages,
                         std::string_view question, const PromptTemplate& prompt = {});

struct GroundedAnswer {
  std::string text;
  std::vector<std::string> context_chunk_ids;
  std::vector<ContextPassage> context;
  std::int64_t latency_ms = 0;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual std::string complete(const std::string& prompt, const GenerationParams& params) = 0;
};

struct LlmEndpointConfig {
  std::string base_url = "http://localhost:11434";
  std::string model = "llama3.2";
  std::chrono::milliseconds timeout{120000};

  /// Reads HYBRIDRAG_LLM_URL, HYBRIDRAG_LLM_MODEL and HYBRIDRAG_LLM_TIMEOUT_S.
  static LlmEndpointConfig from_env();
};

/// Non-streaming client for an Ollama-style /api/generate endpoint.
class OllamaClient final : public LanguageModel {
 public:
  OllamaClient(LlmEndpointConfig config, std::shared_ptr<HttpTransport> transport);

  /// Throws Error(kEndpointUnavailable), Error(kTimeout) or Error(kModelError).
  std::string complete(const std::string& prompt, const GenerationParams& params) override;

  static nlohmann::json request_body(const std::string& model, const std::string& prompt,
                                     const GenerationParams& params);
  const LlmEndpointConfig& config() const noexcept { return config_; }

 private:
  LlmEndpointConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

/// One model call with wall-clock latency.
GroundedAnswer generate(const std::string& prompt, const GenerationParams& params,
                        LanguageModel& model);

struct AnswerOptions {
  FusionConfig fusion{FusionMode::kWeightedRrf, 60, kMaxContextPassages};
  GenerationParams generation;
  PromptTemplate prompt;
};

/// Retrieve top-5, build the prompt, generate, then record the exchange.
/// The session is left untouched when any step throws. Zero hits still
/// produce an answer, generated against the no-context section.
GroundedAnswer answer_query(const KnowledgeBase& kb, LanguageModel& model, ChatSession& session,
                            std::string_view question, const FusionWeights& weights,
                            const AnswerOptions& options = {});

}  // namespace hybridrag
