#include "hybridrag/ingest.hpp"

#include <algorithm>
#include <sstream>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;

std::string_view to_string(DocumentFormat format) noexcept {
  switch (format) {
    case DocumentFormat::kText: return "text";
    case DocumentFormat::kCsv: return "csv";
    case DocumentFormat::kJson: return "json";
  }
  return "text";
}

DocumentFormat parse_document_format(std::string_view name) {
  if (name == "text" || name == "txt" || name == "md") return DocumentFormat::kText;
  if (name == "csv") return DocumentFormat::kCsv;
  if (name == "json") return DocumentFormat::kJson;
  throw Error(ErrorCode::kUnsupportedFormat, "unsupported format");
}

std::optional<DocumentFormat> format_from_filename(std::string_view filename) {
  auto dot = filename.rfind('.');
  if (dot == std::string_view::npos) return std::nullopt;
  auto ext = ascii_lower(filename.substr(dot + 1));
  if (ext == "txt" || ext == "md" || ext == "text") return DocumentFormat::kText;
  if (ext == "csv") return DocumentFormat::kCsv;
  if (ext == "json") return DocumentFormat::kJson;
  return std::nullopt;
}

namespace {

// RFC 4180 style: quoted fields may contain separators, quotes ("") and
// line breaks.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // Blank lines carry no record.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
          throw Error(ErrorCode::kDecodeError, "malformed csv: text after closing quote");
        }
        continue;
      }
      field.push_back(c);
      ++i;
      continue;
    }
    if (c == '"') {
      if (field_started) {
        throw Error(ErrorCode::kDecodeError, "malformed csv: stray quote");
      }
      in_quotes = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' || c == '\n') {
      end_row();
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      ++i;
    } else {
      field.push_back(c);
      field_started = true;
      ++i;
    }
  }
  if (in_quotes) throw Error(ErrorCode::kDecodeError, "malformed csv: unterminated quote");
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string flatten_csv(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  std::string out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::kDecodeError,
                  "malformed csv: row " + std::to_string(r) + " has " +
                      std::to_string(row.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    if (!out.empty()) out.push_back('\n');
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out += "; ";
      out += header[c];
      out += '=';
      out += row[c];
    }
  }
  return out;
}

void flatten_json(const nlohmann::ordered_json& node, const std::string& path,
                  std::string& out) {
  auto emit = [&](const std::string& value) {
    if (!out.empty()) out.push_back('\n');
    out += path.empty() ? "$" : path;
    out += ": ";
    out += value;
  };
  if (node.is_object()) {
    if (node.empty()) return emit("{}");
    for (const auto& [key, child] : node.items()) {
      flatten_json(child, path.empty() ? key : path + "." + key, out);
    }
  } else if (node.is_array()) {
    if (node.empty()) return emit("[]");
    for (std::size_t i = 0; i < node.size(); ++i) {
      flatten_json(node[i], path + "[" + std::to_string(i) + "]", out);
    }
  } else if (node.is_string()) {
    emit(node.get<std::string>());
  } else {
    emit(node.dump());
  }
}

}  // namespace

LoadedDocument load_document(std::string_view bytes, DocumentFormat format,
                             std::string filename) {
  if (!is_valid_utf8(bytes)) throw Error(ErrorCode::kDecodeError, "invalid UTF-8");
  LoadedDocument doc;
  doc.record.doc_id = sha256_hex(bytes);
  doc.record.filename = std::move(filename);
  doc.record.format = format;
  doc.record.byte_length = bytes.size();
  doc.record.ingested_at = utc_timestamp_now();
  switch (format) {
    case DocumentFormat::kText:
      doc.source_text.assign(bytes);
      break;
    case DocumentFormat::kCsv:
      doc.source_text = flatten_csv(bytes);
      break;
    case DocumentFormat::kJson: {
      nlohmann::ordered_json parsed;
      try {
        parsed = nlohmann::ordered_json::parse(bytes);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kDecodeError,
                    "malformed json at byte " + std::to_string(e.byte));
      }
      flatten_json(parsed, "", doc.source_text);
      break;
    }
  }
  return doc;
}

void ChunkConfig::validate() const {
  if (chunk_size == 0 || overlap >= chunk_size) {
    throw Error(ErrorCode::kInvalidArgument, "chunk config requires 0 <= overlap < chunk_size");
  }
}

std::vector<TokenSpan> whitespace_tokens(std::string_view text) {
  auto is_ws = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::vector<TokenSpan> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t begin = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    tokens.push_back({begin, i});
  }
  return tokens;
}

namespace {

class BreakFinder {
 public:
  BreakFinder(std::string_view text, const std::vector<TokenSpan>& tokens,
              const ChunkConfig& config)
      : text_(text), tokens_(tokens), config_(config), is_break_(tokens.size() + 1, false) {
    is_break_.front() = true;
    is_break_.back() = true;
  }

  std::vector<std::size_t> run() {
    split(0, tokens_.size(), 0);
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < is_break_.size(); ++b) {
      if (is_break_[b]) out.push_back(b);
    }
    return out;
  }

 private:
  // First token index in [lo, hi] whose first byte is at or after pos.
  std::size_t token_at_or_after(std::size_t pos, std::size_t lo, std::size_t hi) const {
    auto it = std::lower_bound(tokens_.begin() + static_cast<std::ptrdiff_t>(lo),
                               tokens_.begin() + static_cast<std::ptrdiff_t>(hi), pos,
                               [](const TokenSpan& t, std::size_t p) { return t.begin < p; });
    return static_cast<std::size_t>(it - tokens_.begin());
  }

  void split(std::size_t lo, std::size_t hi, std::size_t level) {
    if (hi - lo <= config_.chunk_size) return;
    if (level >= config_.separators.size() || config_.separators[level].empty()) {
      for (std::size_t b = lo + 1; b < hi; ++b) is_break_[b] = true;
      return;
    }
    const std::string& sep = config_.separators[level];
    const std::size_t byte_lo = tokens_[lo].begin;
    const std::size_t byte_hi = tokens_[hi - 1].end;
    std::vector<std::size_t> bounds{lo};
    std::size_t pos = text_.find(sep, byte_lo);
    while (pos != std::string_view::npos && pos < byte_hi) {
      std::size_t b = token_at_or_after(pos + sep.size(), lo, hi);
      if (b > bounds.back() && b < hi) bounds.push_back(b);
      pos = text_.find(sep, pos + std::max<std::size_t>(sep.size(), 1));
    }
    bounds.push_back(hi);
    if (bounds.size() == 2) {
      split(lo, hi, level + 1);
      return;
    }
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
      is_break_[bounds[i]] = true;
      split(bounds[i], bounds[i + 1], level + 1);
    }
  }

  std::string_view text_;
  const std::vector<TokenSpan>& tokens_;
  const ChunkConfig& config_;
  std::vector<bool> is_break_;
};

}  // namespace

std::vector<Chunk> chunk_text(std::string_view source_text, const ChunkConfig& config,
                              std::string_view doc_id, std::string_view filename) {
  config.validate();
  const auto tokens = whitespace_tokens(source_text);
  std::vector<Chunk> chunks;
  if (tokens.empty()) return chunks;
  const std::size_t n = tokens.size();
  const auto breaks = BreakFinder(source_text, tokens, config).run();

  std::size_t start = 0;
  while (true) {
    std::size_t end = n;
    if (n - start > config.chunk_size) {
      const std::size_t limit = start + config.chunk_size;
      end = limit;
      auto it = std::upper_bound(breaks.begin(), breaks.end(), limit);
      if (it != breaks.begin()) {
        std::size_t b = *std::prev(it);
        if (b > start + config.overlap) end = b;
      }
    }
    Chunk c;
    c.doc_id = std::string(doc_id);
    c.chunk_id = c.doc_id + ":" + std::to_string(chunks.size());
    c.span = {tokens[start].begin, tokens[end - 1].end};
    c.text = std::string(source_text.substr(c.span.start, c.span.end - c.span.start));
    c.token_count = end - start;
    c.provenance = std::string(filename) + "[" + std::to_string(c.span.start) + ".." +
                   std::to_string(c.span.end) + "]";
    chunks.push_back(std::move(c));
    if (end == n) break;
    start = end - config.overlap;
  }
  return chunks;
}

json to_json(const DocumentRecord& record) {
  return json{{"doc_id", record.doc_id},
              {"filename", record.filename},
              {"format", to_string(record.format)},
              {"byte_length", record.byte_length},
              {"ingested_at", record.ingested_at}};
}

DocumentRecord document_record_from_json(const json& j) {
  DocumentRecord r;
  r.doc_id = j.at("doc_id").get<std::string>();
  r.filename = j.at("filename").get<std::string>();
  r.format = parse_document_format(j.at("format").get<std::string>());
  r.byte_length = j.at("byte_length").get<std::size_t>();
  r.ingested_at = j.value("ingested_at", std::string{});
  return r;
}

json to_json(const Chunk& chunk) {
  return json{{"chunk_id", chunk.chunk_id},
              {"doc_id", chunk.doc_id},
              {"text", chunk.text},
              {"token_count", chunk.token_count},
              {"span", {chunk.span.start, chunk.span.end}},
              {"provenance", chunk.provenance}};
}

Chunk chunk_from_json(const json& j) {
  Chunk c;
  c.chunk_id = j.at("chunk_id").get<std::string>();
  c.doc_id = j.at("doc_id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.token_count = j.at("token_count").get<std::size_t>();
  c.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
  c.provenance = j.at("provenance").get<std::string>();
  return c;
}

bool ChunkStore::contains_document(std::string_view doc_id) const {
  return documents_.find(doc_id) != documents_.end();
}

const DocumentRecord* ChunkStore::document(std::string_view doc_id) const {
  auto it = documents_.find(doc_id);
  return it == documents_.end() ? nullptr : &it->second;
}

const Chunk* ChunkStore::chunk(std::string_view chunk_id) const {
  auto it = chunks_.find(chunk_id);
  return it == chunks_.end() ? nullptr : &it->second;
}

std::vector<DocumentRecord> ChunkStore::documents() const {
  std::vector<DocumentRecord> out;
  out.reserve(order_.size());
  for (const auto& id : order_) out.push_back(documents_.find(id)->second);
  return out;
}

std::vector<Chunk> ChunkStore::chunks_of(std::string_view doc_id) const {
  std::vector<Chunk> out;
  auto it = doc_chunks_.find(doc_id);
  if (it == doc_chunks_.end()) return out;
  for (const auto& id : it->second) out.push_back(chunks_.find(id)->second);
  return out;
}

void ChunkStore::add(const DocumentRecord& record, std::vector<Chunk> chunks) {
  if (contains_document(record.doc_id)) {
    throw Error(ErrorCode::kDuplicateDocument, "duplicate document");
  }
  std::vector<std::string> ids;
  ids.reserve(chunks.size());
  for (auto& c : chunks) {
    ids.push_back(c.chunk_id);
    chunks_.emplace(c.chunk_id, std::move(c));
  }
  order_.push_back(record.doc_id);
  doc_chunks_.emplace(record.doc_id, std::move(ids));
  documents_.emplace(record.doc_id, record);
}

std::vector<std::string> ChunkStore::remove(std::string_view doc_id) {
  auto it = doc_chunks_.find(doc_id);
  if (it == doc_chunks_.end()) return {};
  std::vector<std::string> ids = std::move(it->second);
  for (const auto& id : ids) chunks_.erase(id);
  doc_chunks_.erase(it);
  documents_.erase(documents_.find(doc_id));
  order_.erase(std::find(order_.begin(), order_.end(), doc_id));
  return ids;
}

void ChunkStore::save(const std::filesystem::path& dir) const {
  std::string docs;
  std::string chunks;
  for (const auto& id : order_) {
    docs += to_json(documents_.find(id)->second).dump();
    docs += '\n';
    for (const auto& cid : doc_chunks_.find(id)->second) {
      chunks += to_json(chunks_.find(cid)->second).dump();
      chunks += '\n';
    }
  }
  write_file_atomic(dir / "documents.jsonl", docs);
  write_file_atomic(dir / "chunks.jsonl", chunks);
}

ChunkStore ChunkStore::load(const std::filesystem::path& dir) {
  ChunkStore store;
  const auto docs_path = dir / "documents.jsonl";
  const auto chunks_path = dir / "chunks.jsonl";
  if (!std::filesystem::exists(docs_path)) return store;
  std::map<std::string, std::vector<Chunk>> by_doc;
  if (std::filesystem::exists(chunks_path)) {
    std::istringstream in(read_file(chunks_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        auto c = chunk_from_json(json::parse(line));
        by_doc[c.doc_id].push_back(std::move(c));
      } catch (const json::exception&) {
        throw Error(ErrorCode::kParseError,
                    chunks_path.string() + ": line " + std::to_string(lineno));
      }
    }
  }
  std::istringstream in(read_file(docs_path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    DocumentRecord rec;
    try {
      rec = document_record_from_json(json::parse(line));
    } catch (const json::exception&) {
      throw Error(ErrorCode::kParseError,
                  docs_path.string() + ": line " + std::to_string(lineno));
    }
    auto chunks = std::move(by_doc[rec.doc_id]);
    store.add(rec, std::move(chunks));
  }
  return store;
}

}  // namespace hybridrag
