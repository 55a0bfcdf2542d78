#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hybridrag/dense_index.hpp"
#include "hybridrag/fusion.hpp"
#include "hybridrag/ingest.hpp"
#include "hybridrag/sparse_index.hpp"

namespace hybridrag {

enum class DuplicatePolicy { kError, kSkip };

struct KnowledgeBaseConfig {
  ChunkConfig chunking;
  Bm25Params bm25;
  DuplicatePolicy on_duplicate = DuplicatePolicy::kError;
};

struct IngestReport {
  std::string doc_id;
  std::size_t n_chunks = 0;
  bool already_present = false;
};

struct LegResults {
  std::vector<RetrievedHit> sparse;
  std::vector<RetrievedHit> dense;
};

/// The server-side document set: chunk store, BM25 index and vector store
/// kept in lockstep. Writers are exclusive; searches take a shared lock and
/// see the last committed state.
class KnowledgeBase {
 public:
  KnowledgeBase(std::shared_ptr<CachedEmbedder> embedder, KnowledgeBaseConfig config = {});

  /// Chunks and indexes one loaded document. Either every chunk lands in
  /// both indices or none does. A repeated doc_id raises
  /// Error(kDuplicateDocument) or is a no-op, per config.on_duplicate.
  IngestReport ingest_document(const DocumentRecord& record, std::string_view source_text);
  IngestReport ingest_bytes(std::string_view bytes, DocumentFormat format,
                            const std::string& filename);

  /// Returns false if the document is unknown.
  bool delete_document(std::string_view doc_id);

  std::vector<DocumentRecord> list_documents() const;
  std::size_t n_chunks_of(std::string_view doc_id) const;
  std::optional<Chunk> chunk(std::string_view chunk_id) const;
  std::size_t n_chunks() const;
  std::size_t n_documents() const;

  /// Both legs to the given depth. Throws Error(kEmptyIndex) when no chunks
  /// are indexed.
  LegResults search_legs(std::string_view query_text, std::size_t depth) const;

  /// Hybrid retrieval: legs to leg_depth(config.k), then fusion.
  std::vector<RetrievedHit> retrieve(std::string_view query_text, const FusionWeights& weights,
                                     const FusionConfig& config) const;

  /// Persists chunks, BM25 postings and the embedding cache under dir.
  void save(const std::filesystem::path& dir) const;
  /// Restores chunks and postings and rebuilds the vector store through the
  /// embedder, which is served from the persisted cache when warm.
  static std::unique_ptr<KnowledgeBase> load(const std::filesystem::path& dir,
                                             std::shared_ptr<CachedEmbedder> embedder,
                                             KnowledgeBaseConfig config = {});

  const KnowledgeBaseConfig& config() const noexcept { return config_; }
  const SparseIndex& sparse() const noexcept { return sparse_; }
  const VectorStore& dense() const noexcept { return dense_; }
  CachedEmbedder& embedder() const noexcept { return *embedder_; }

 private:
  std::shared_ptr<CachedEmbedder> embedder_;
  KnowledgeBaseConfig config_;
  mutable std::shared_mutex mutex_;
  ChunkStore store_;
  SparseIndex sparse_;
  VectorStore dense_;
};

/// Cache file locations inside a data directory.
std::filesystem::path embedding_cache_binary(const std::filesystem::path& dir);
std::filesystem::path embedding_cache_manifest(const std::filesystem::path& dir);

}  // namespace hybridrag
