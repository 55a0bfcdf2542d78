#include "hybridrag/knowledge_base.hpp"

#include <mutex>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

std::filesystem::path embedding_cache_binary(const std::filesystem::path& dir) {
  return dir / "embeddings.f32";
}

std::filesystem::path embedding_cache_manifest(const std::filesystem::path& dir) {
  return dir / "embeddings.json";
}

KnowledgeBase::KnowledgeBase(std::shared_ptr<CachedEmbedder> embedder, KnowledgeBaseConfig config)
    : embedder_(std::move(embedder)),
      config_(std::move(config)),
      sparse_(config_.bm25),
      dense_(embedder_ ? embedder_->dim() : 1) {
  if (!embedder_) throw Error(ErrorCode::kInvalidArgument, "knowledge base requires an embedder");
  config_.chunking.validate();
}

IngestReport KnowledgeBase::ingest_document(const DocumentRecord& record,
                                            std::string_view source_text) {
  std::unique_lock lock(mutex_);
  if (store_.contains_document(record.doc_id)) {
    if (config_.on_duplicate == DuplicatePolicy::kSkip) {
      return {record.doc_id, store_.chunks_of(record.doc_id).size(), true};
    }
    throw Error(ErrorCode::kDuplicateDocument, "duplicate document");
  }
  auto chunks = chunk_text(source_text, config_.chunking, record.doc_id, record.filename);
  IngestReport report{record.doc_id, chunks.size(), false};

  std::vector<std::string> ids;
  std::vector<std::string> texts;
  ids.reserve(chunks.size());
  texts.reserve(chunks.size());
  for (const auto& c : chunks) {
    ids.push_back(c.chunk_id);
    texts.push_back(c.text);
  }
  std::vector<EmbeddingVector> vectors;
  if (!texts.empty()) vectors = embedder_->embed(texts);

  sparse_.add_chunks(chunks);
  try {
    dense_.add_batch(ids, vectors);
  } catch (const Error& e) {
    sparse_.remove_chunks(ids);
    throw Error(ErrorCode::kIndexWriteError, std::string("index write failed: ") + e.what());
  }
  store_.add(record, std::move(chunks));
  return report;
}

IngestReport KnowledgeBase::ingest_bytes(std::string_view bytes, DocumentFormat format,
                                         const std::string& filename) {
  auto doc = load_document(bytes, format, filename);
  return ingest_document(doc.record, doc.source_text);
}

bool KnowledgeBase::delete_document(std::string_view doc_id) {
  std::unique_lock lock(mutex_);
  if (!store_.contains_document(doc_id)) return false;
  auto ids = store_.remove(doc_id);
  sparse_.remove_chunks(ids);
  dense_.remove(ids);
  return true;
}

std::vector<DocumentRecord> KnowledgeBase::list_documents() const {
  std::shared_lock lock(mutex_);
  return store_.documents();
}

std::size_t KnowledgeBase::n_chunks_of(std::string_view doc_id) const {
  std::shared_lock lock(mutex_);
  return store_.chunks_of(doc_id).size();
}

std::optional<Chunk> KnowledgeBase::chunk(std::string_view chunk_id) const {
  std::shared_lock lock(mutex_);
  if (const Chunk* c = store_.chunk(chunk_id)) return *c;
  return std::nullopt;
}

std::size_t KnowledgeBase::n_chunks() const {
  std::shared_lock lock(mutex_);
  return store_.n_chunks();
}

std::size_t KnowledgeBase::n_documents() const {
  std::shared_lock lock(mutex_);
  return store_.n_documents();
}

LegResults KnowledgeBase::search_legs(std::string_view query_text, std::size_t depth) const {
  if (n_chunks() == 0) throw Error(ErrorCode::kEmptyIndex, "empty index");
  const auto query_vec = embedder_->embed_one(std::string(query_text));
  std::shared_lock lock(mutex_);
  if (store_.n_chunks() == 0) throw Error(ErrorCode::kEmptyIndex, "empty index");
  return LegResults{sparse_.search(query_text, depth), dense_.search(query_vec, depth)};
}

std::vector<RetrievedHit> KnowledgeBase::retrieve(std::string_view query_text,
                                                  const FusionWeights& weights,
                                                  const FusionConfig& config) const {
  config.validate();
  weights.validate();
  auto legs = search_legs(query_text, leg_depth(config.k));
  return fuse(legs.sparse, legs.dense, weights, config);
}

void KnowledgeBase::save(const std::filesystem::path& dir) const {
  std::shared_lock lock(mutex_);
  std::filesystem::create_directories(dir);
  store_.save(dir);
  sparse_.save(dir / "sparse_index.json");
  if (embedder_->cache()) {
    embedder_->cache()->save(embedding_cache_binary(dir), embedding_cache_manifest(dir));
  }
}

std::unique_ptr<KnowledgeBase> KnowledgeBase::load(const std::filesystem::path& dir,
                                                   std::shared_ptr<CachedEmbedder> embedder,
                                                   KnowledgeBaseConfig config) {
  auto kb = std::make_unique<KnowledgeBase>(std::move(embedder), std::move(config));
  kb->store_ = ChunkStore::load(dir);
  const auto sparse_path = dir / "sparse_index.json";
  std::vector<Chunk> all;
  for (const auto& rec : kb->store_.documents()) {
    auto cs = kb->store_.chunks_of(rec.doc_id);
    all.insert(all.end(), cs.begin(), cs.end());
  }
  if (std::filesystem::exists(sparse_path)) {
    kb->sparse_ = SparseIndex::load(sparse_path);
  } else {
    kb->sparse_.add_chunks(all);
  }
  if (!all.empty()) {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    for (const auto& c : all) {
      ids.push_back(c.chunk_id);
      texts.push_back(c.text);
    }
    kb->dense_.add_batch(ids, kb->embedder_->embed(texts));
  }
  return kb;
}

}  // namespace hybridrag
