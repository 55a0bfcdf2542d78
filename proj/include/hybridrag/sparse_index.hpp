#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hybridrag/ingest.hpp"
#include "hybridrag/types.hpp"

namespace hybridrag {

/// Lowercases ASCII and splits on every byte that is not an ASCII letter or
/// digit. Bytes of multi-byte UTF-8 sequences count as term characters.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  void validate() const;
};

struct Posting {
  std::string chunk_id;
  std::uint32_t term_frequency = 0;
};

/// In-memory inverted index scored with Okapi BM25.
///
///   score(q, d) = sum over t in q of
///       idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
///   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
///
/// Query terms are a multiset: a term repeated in the query contributes once
/// per occurrence. Postings are kept sorted by chunk id.
class SparseIndex {
 public:
  explicit SparseIndex(Bm25Params params = {});

  /// All-or-nothing: throws Error(kDuplicateChunk) and leaves the index
  /// untouched if any id is already present or repeated in the batch.
  void add_chunks(std::span<const Chunk> chunks);
  void remove_chunks(std::span<const std::string> chunk_ids);

  /// Top-k chunks by BM25 score, descending, ties by ascending chunk id.
  /// Chunks scoring zero are omitted. Throws Error(kEmptyIndex) when the
  /// index holds no chunks.
  std::vector<RetrievedHit> search(std::string_view query_text, std::size_t k) const;

  double idf(std::string_view term) const;
  std::size_t document_frequency(std::string_view term) const;
  std::size_t doc_length(std::string_view chunk_id) const;
  bool contains(std::string_view chunk_id) const;

  std::size_t n_docs() const noexcept { return doc_lengths_.size(); }
  double avg_doc_length() const noexcept;
  const Bm25Params& params() const noexcept { return params_; }
  const std::vector<Posting>* postings(std::string_view term) const;

  nlohmann::json to_json() const;
  static SparseIndex from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SparseIndex load(const std::filesystem::path& path);

 private:
  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::map<std::string, std::size_t, std::less<>> doc_lengths_;
  std::uint64_t total_length_ = 0;
};

}  // namespace hybridrag
