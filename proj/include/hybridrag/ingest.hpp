#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hybridrag {

enum class DocumentFormat { kText, kCsv, kJson };

std::string_view to_string(DocumentFormat format) noexcept;
/// Accepts "text", "csv", "json" (also "txt"/"md" as text). Throws
/// Error(kUnsupportedFormat) otherwise.
DocumentFormat parse_document_format(std::string_view name);
/// Maps a filename extension to a format, if it is on the allowlist.
std::optional<DocumentFormat> format_from_filename(std::string_view filename);

struct DocumentRecord {
  std::string doc_id;  // sha256 hex of the raw bytes
  std::string filename;
  DocumentFormat format = DocumentFormat::kText;
  std::size_t byte_length = 0;
  std::string ingested_at;

  friend bool operator==(const DocumentRecord&, const DocumentRecord&) = default;
};

struct LoadedDocument {
  DocumentRecord record;
  std::string source_text;
};

/// Decodes raw bytes into indexable text.
///
/// text is passed through. csv takes the first row as the header and renders
/// every following row as one line of `col=value; col=value`. json is
/// flattened to one `path: value` line per leaf, with object keys joined by
/// '.' and array elements written as `[i]`.
///
/// Throws Error(kDecodeError) for invalid UTF-8 and malformed csv/json.
LoadedDocument load_document(std::string_view bytes, DocumentFormat format,
                             std::string filename = {});

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct Chunk {
  std::string chunk_id;  // doc_id + ":" + ordinal
  std::string doc_id;
  std::string text;
  std::size_t token_count = 0;
  CharSpan span;
  std::string provenance;  // filename[start..end]

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct ChunkConfig {
  std::size_t chunk_size = 350;
  std::size_t overlap = 40;
  std::vector<std::string> separators = {"\n\n", "\n", ". ", " "};

  /// Throws Error(kInvalidArgument) unless 0 <= overlap < chunk_size.
  void validate() const;
};

/// Byte range of one whitespace-delimited token.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<TokenSpan> whitespace_tokens(std::string_view text);

/// Splits text into overlapping windows of whitespace tokens.
///
/// Candidate break points come from recursive splitting: the text is cut on
/// the first separator, and any fragment still longer than chunk_size is cut
/// again on the next one, down to single tokens. Each chunk then ends at the
/// furthest break point that keeps it within chunk_size while advancing past
/// the overlap, and the next chunk starts exactly `overlap` tokens before
/// that end. Every chunk's text is the verbatim source slice named by its
/// span.
std::vector<Chunk> chunk_text(std::string_view source_text, const ChunkConfig& config,
                              std::string_view doc_id = {},
                              std::string_view filename = {});

nlohmann::json to_json(const DocumentRecord& record);
DocumentRecord document_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

/// Documents and their chunks, persisted as newline-delimited JSON.
class ChunkStore {
 public:
  bool contains_document(std::string_view doc_id) const;
  const DocumentRecord* document(std::string_view doc_id) const;
  const Chunk* chunk(std::string_view chunk_id) const;

  /// Documents in ingestion order.
  std::vector<DocumentRecord> documents() const;
  std::vector<Chunk> chunks_of(std::string_view doc_id) const;
  std::size_t n_chunks() const noexcept { return chunks_.size(); }
  std::size_t n_documents() const noexcept { return order_.size(); }

  void add(const DocumentRecord& record, std::vector<Chunk> chunks);
  /// Returns the removed chunk ids, empty if the document was unknown.
  std::vector<std::string> remove(std::string_view doc_id);

  /// Writes documents.jsonl and chunks.jsonl under dir.
  void save(const std::filesystem::path& dir) const;
  static ChunkStore load(const std::filesystem::path& dir);

 private:
  std::vector<std::string> order_;
  std::map<std::string, DocumentRecord, std::less<>> documents_;
  std::map<std::string, std::vector<std::string>, std::less<>> doc_chunks_;
  std::map<std::string, Chunk, std::less<>> chunks_;
};

}  // namespace hybridrag
