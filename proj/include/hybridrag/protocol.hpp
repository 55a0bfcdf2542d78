#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "hybridrag/generation.hpp"
#include "hybridrag/ingest.hpp"
#include "hybridrag/knowledge_base.hpp"

namespace hybridrag {

// Stable error strings of the line protocol.
namespace protocol_errors {
inline constexpr std::string_view kMalformedRequest = "malformed request";
inline constexpr std::string_view kUnknownCommand = "unknown command";
inline constexpr std::string_view kWeightOutOfRange = "weight out of range";
inline constexpr std::string_view kUnsupportedFormat = "unsupported format";
inline constexpr std::string_view kDocumentTooLarge = "document too large";
inline constexpr std::string_view kInvalidBase64 = "invalid base64";
inline constexpr std::string_view kDecodeError = "document could not be decoded";
inline constexpr std::string_view kDuplicateDocument = "duplicate document";
inline constexpr std::string_view kUnknownDocument = "unknown document";
inline constexpr std::string_view kEmptyIndex = "empty index";
inline constexpr std::string_view kEmbeddingUnavailable = "embedding provider unavailable";
inline constexpr std::string_view kGenerationUnavailable = "generation endpoint unavailable";
inline constexpr std::string_view kGenerationTimeout = "generation timed out";
inline constexpr std::string_view kGenerationFailed = "generation failed";
inline constexpr std::string_view kIndexWriteFailed = "index write failed";
inline constexpr std::string_view kInternalError = "internal error";
inline constexpr std::string_view kRequestTooLarge = "request too large";
}  // namespace protocol_errors

struct ServerConfig {
  std::size_t upload_cap_bytes = 100u * 1024u * 1024u;
  std::set<DocumentFormat> allowed_formats{DocumentFormat::kText, DocumentFormat::kCsv,
                                           DocumentFormat::kJson};
  FusionWeights initial_weights{};
  AnswerOptions answer;
  /// When set, the knowledge base is saved here after every write.
  std::optional<std::filesystem::path> data_dir;
};

nlohmann::json ok_response(nlohmann::json payload);
nlohmann::json error_response(std::string_view message);

/// Dispatches protocol requests of the form {"command": str, "params": {...}}
/// (parameters may also sit at the top level) to the knowledge base and
/// language model. Owns all chat sessions.
///
/// Responses are {"status": "ok", "payload": {...}} or
/// {"status": "error", "error_message": str}. Error messages come from a
/// fixed vocabulary and never echo configuration or environment values.
class ProtocolHandler {
 public:
  ProtocolHandler(std::shared_ptr<KnowledgeBase> kb, std::shared_ptr<LanguageModel> model,
                  ServerConfig config = {});

  nlohmann::json handle_request(const nlohmann::json& request);
  /// Parses one framed line and returns the response line without '\n'.
  std::string handle_line(std::string_view line);

  FusionWeights weights() const;

 private:
  struct SessionSlot {
    std::mutex mutex;
    ChatSession session;
  };

  nlohmann::json dispatch(const std::string& command, const nlohmann::json& params);
  nlohmann::json cmd_health();
  nlohmann::json cmd_upload(const nlohmann::json& params);
  nlohmann::json cmd_list();
  nlohmann::json cmd_delete(const nlohmann::json& params);
  nlohmann::json cmd_query(const nlohmann::json& params);
  nlohmann::json cmd_reset(const nlohmann::json& params);
  nlohmann::json cmd_set_weights(const nlohmann::json& params);
  std::shared_ptr<SessionSlot> session_slot(const std::string& id, bool create);
  void persist();

  std::shared_ptr<KnowledgeBase> kb_;
  std::shared_ptr<LanguageModel> model_;
  ServerConfig config_;
  std::chrono::steady_clock::time_point started_;
  mutable std::mutex weights_mutex_;
  FusionWeights weights_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  std::mutex persist_mutex_;
};

}  // namespace hybridrag
