#include "hybridrag/protocol.hpp"

#include <spdlog/spdlog.h>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;
namespace pe = protocol_errors;

namespace {

class RequestError : public std::runtime_error {
 public:
  explicit RequestError(std::string_view message) : std::runtime_error(std::string(message)) {}
};

const std::string& require_string(const json& params, const char* key) {
  auto it = params.find(key);
  if (it == params.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw RequestError("invalid parameter: " + std::string(key));
  }
  return it->get_ref<const std::string&>();
}

std::string_view message_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kUnsupportedFormat: return pe::kUnsupportedFormat;
    case ErrorCode::kDecodeError: return pe::kDecodeError;
    case ErrorCode::kDuplicateDocument: return pe::kDuplicateDocument;
    case ErrorCode::kEmptyIndex:
    case ErrorCode::kEmptyStore: return pe::kEmptyIndex;
    case ErrorCode::kProviderUnavailable:
    case ErrorCode::kDimensionMismatch: return pe::kEmbeddingUnavailable;
    case ErrorCode::kEndpointUnavailable: return pe::kGenerationUnavailable;
    case ErrorCode::kTimeout: return pe::kGenerationTimeout;
    case ErrorCode::kModelError: return pe::kGenerationFailed;
    case ErrorCode::kIndexWriteError: return pe::kIndexWriteFailed;
    case ErrorCode::kNotFound: return pe::kUnknownDocument;
    case ErrorCode::kInvalidArgument: return "invalid request";
    default: return pe::kInternalError;
  }
}

json document_json(const DocumentRecord& rec, std::size_t n_chunks) {
  auto j = to_json(rec);
  j["n_chunks"] = n_chunks;
  return j;
}

}  // namespace

json ok_response(json payload) {
  return json{{"status", "ok"}, {"payload", std::move(payload)}};
}

json error_response(std::string_view message) {
  return json{{"status", "error"}, {"error_message", message}};
}

ProtocolHandler::ProtocolHandler(std::shared_ptr<KnowledgeBase> kb,
                                 std::shared_ptr<LanguageModel> model, ServerConfig config)
    : kb_(std::move(kb)),
      model_(std::move(model)),
      config_(std::move(config)),
      started_(std::chrono::steady_clock::now()),
      weights_(config_.initial_weights) {
  if (!kb_ || !model_) {
    throw Error(ErrorCode::kInvalidArgument, "protocol handler needs a knowledge base and model");
  }
  weights_.validate();
}

FusionWeights ProtocolHandler::weights() const {
  std::lock_guard lock(weights_mutex_);
  return weights_;
}

std::string ProtocolHandler::handle_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  json response;
  if (!is_valid_utf8(line)) {
    response = error_response(pe::kMalformedRequest);
  } else {
    json request = json::parse(line, nullptr, /*allow_exceptions=*/false);
    response = request.is_discarded() ? error_response(pe::kMalformedRequest)
                                      : handle_request(request);
  }
  return response.dump(-1, ' ', false, json::error_handler_t::replace);
}

json ProtocolHandler::handle_request(const json& request) {
  if (!request.is_object()) return error_response(pe::kMalformedRequest);
  auto cmd = request.find("command");
  if (cmd == request.end() || !cmd->is_string() || cmd->get_ref<const std::string&>().empty()) {
    return error_response(pe::kMalformedRequest);
  }
  json params = json::object();
  if (auto p = request.find("params"); p != request.end()) {
    if (!p->is_object()) return error_response(pe::kMalformedRequest);
    params = *p;
  } else {
    params = request;
    params.erase("command");
  }
  const auto& command = cmd->get_ref<const std::string&>();
  try {
    return dispatch(command, params);
  } catch (const RequestError& e) {
    return error_response(e.what());
  } catch (const Error& e) {
    spdlog::warn("command {} failed: {}", command.size() <= 32 ? command : "?",
                 to_string(e.code()));
    return error_response(message_for(e));
  } catch (const std::exception&) {
    return error_response(pe::kInternalError);
  }
}

json ProtocolHandler::dispatch(const std::string& command, const json& params) {
  if (command == "health") return cmd_health();
  if (command == "upload_document") return cmd_upload(params);
  if (command == "list_documents") return cmd_list();
  if (command == "delete_document") return cmd_delete(params);
  if (command == "query") return cmd_query(params);
  if (command == "reset_history") return cmd_reset(params);
  if (command == "set_weights") return cmd_set_weights(params);
  return error_response(pe::kUnknownCommand);
}

json ProtocolHandler::cmd_health() {
  const auto uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_);
  const auto w = weights();
  return ok_response({{"uptime_s", uptime.count()},
                      {"n_documents", kb_->n_documents()},
                      {"n_chunks", kb_->n_chunks()},
                      {"sparse_w", w.sparse_w},
                      {"dense_w", w.dense_w}});
}

json ProtocolHandler::cmd_upload(const json& params) {
  const auto& filename = require_string(params, "filename");
  const auto& content = require_string(params, "content_b64");
  DocumentFormat format;
  if (auto f = params.find("format"); f != params.end()) {
    if (!f->is_string()) throw RequestError("invalid parameter: format");
    try {
      format = parse_document_format(f->get<std::string>());
    } catch (const Error&) {
      return error_response(pe::kUnsupportedFormat);
    }
  } else if (auto guessed = format_from_filename(filename)) {
    format = *guessed;
  } else {
    return error_response(pe::kUnsupportedFormat);
  }
  if (!config_.allowed_formats.contains(format)) return error_response(pe::kUnsupportedFormat);
  if (content.size() / 4 * 3 > config_.upload_cap_bytes + 3) {
    return error_response(pe::kDocumentTooLarge);
  }
  std::string bytes;
  try {
    bytes = base64_decode(content);
  } catch (const Error&) {
    return error_response(pe::kInvalidBase64);
  }
  if (bytes.size() > config_.upload_cap_bytes) return error_response(pe::kDocumentTooLarge);

  auto report = kb_->ingest_bytes(bytes, format, filename);
  spdlog::info("ingested doc_id={} bytes={} chunks={}", report.doc_id, bytes.size(),
               report.n_chunks);
  if (!report.already_present) persist();
  return ok_response({{"doc_id", report.doc_id},
                      {"n_chunks", report.n_chunks},
                      {"already_present", report.already_present}});
}

json ProtocolHandler::cmd_list() {
  json docs = json::array();
  for (const auto& rec : kb_->list_documents()) {
    docs.push_back(document_json(rec, kb_->n_chunks_of(rec.doc_id)));
  }
  return ok_response({{"documents", std::move(docs)}});
}

json ProtocolHandler::cmd_delete(const json& params) {
  const auto& doc_id = require_string(params, "doc_id");
  if (!kb_->delete_document(doc_id)) return error_response(pe::kUnknownDocument);
  spdlog::info("deleted doc_id={}", doc_id);
  persist();
  return ok_response({{"doc_id", doc_id}, {"deleted", true}});
}

json ProtocolHandler::cmd_query(const json& params) {
  const auto& session_id = require_string(params, "session_id");
  const auto& question = require_string(params, "question");
  auto slot = session_slot(session_id, true);
  std::lock_guard lock(slot->mutex);
  auto answer = answer_query(*kb_, *model_, slot->session, question, weights(), config_.answer);
  spdlog::info("query session={} question_sha256={} hits={} latency_ms={}",
               sha256_hex(session_id).substr(0, 12), sha256_hex(question).substr(0, 16),
               answer.context_chunk_ids.size(), answer.latency_ms);
  json provenance = json::array();
  for (const auto& p : answer.context) {
    auto c = kb_->chunk(p.chunk_id);
    provenance.push_back({{"chunk_id", p.chunk_id},
                          {"doc_id", c ? c->doc_id : std::string{}},
                          {"provenance", p.provenance},
                          {"snippet", p.text}});
  }
  return ok_response({{"session_id", session_id},
                      {"answer", answer.text},
                      {"context_chunk_ids", answer.context_chunk_ids},
                      {"provenance", std::move(provenance)},
                      {"latency_ms", answer.latency_ms},
                      {"prompt_version", config_.answer.prompt.version}});
}

json ProtocolHandler::cmd_reset(const json& params) {
  const auto& session_id = require_string(params, "session_id");
  if (auto slot = session_slot(session_id, false)) {
    std::lock_guard lock(slot->mutex);
    slot->session.reset();
  }
  return ok_response({{"session_id", session_id}, {"reset", true}});
}

json ProtocolHandler::cmd_set_weights(const json& params) {
  auto it = params.find("sparse_w");
  if (it == params.end() || !it->is_number()) throw RequestError("invalid parameter: sparse_w");
  FusionWeights w;
  try {
    w = FusionWeights::from_sparse(it->get<double>());
  } catch (const Error&) {
    return error_response(pe::kWeightOutOfRange);
  }
  {
    std::lock_guard lock(weights_mutex_);
    weights_ = w;
  }
  return ok_response({{"sparse_w", w.sparse_w}, {"dense_w", w.dense_w}});
}

std::shared_ptr<ProtocolHandler::SessionSlot> ProtocolHandler::session_slot(
    const std::string& id, bool create) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it != sessions_.end()) return it->second;
  if (!create) return nullptr;
  auto slot = std::make_shared<SessionSlot>();
  slot->session = ChatSession(id);
  sessions_.emplace(id, slot);
  return slot;
}

void ProtocolHandler::persist() {
  if (!config_.data_dir) return;
  std::lock_guard lock(persist_mutex_);
  kb_->save(*config_.data_dir);
}

}  // namespace hybridrag
