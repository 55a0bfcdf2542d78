#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridrag/http_transport.hpp"
#include "hybridrag/types.hpp"

namespace hybridrag {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

double dot(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Scales to unit L2 norm in place. An all-zero vector becomes e_0.
/// Throws Error(kInvalidArgument) on non-finite input.
void l2_normalize(std::vector<float>& values);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Identifies the model configuration; part of every cache key.
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  /// One raw (not necessarily normalized) vector per text, in order.
  virtual std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) = 0;
};

/// Feature-hashing embedder: every tokenize() term adds ±1 to the coordinate
/// its FNV-1a hash selects (sign from the hash's top bit), then the sum is
/// L2-normalized. Empty text maps to e_0. Requires dim >= 8.
EmbeddingVector hash_embed(std::string_view text, std::size_t dim);

class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::size_t dim = 256);
  std::string name() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
};

struct HttpEmbeddingConfig {
  std::string url = "http://localhost:8080/embed";
  std::string model = "BAAI/bge-base-en-v1.5";
  std::size_t dim = 768;
  std::chrono::milliseconds timeout{120000};

  /// Reads HYBRIDRAG_EMBED_URL, HYBRIDRAG_EMBED_MODEL and HYBRIDRAG_EMBED_DIM.
  static HttpEmbeddingConfig from_env();
};

/// Client for a local embedding service:
///   POST {"model": str, "input": [str]}  ->  {"embeddings": [[float]]}
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(HttpEmbeddingConfig config, std::shared_ptr<HttpTransport> transport);
  std::string name() const override;
  std::size_t dim() const override { return config_.dim; }
  /// Throws Error(kProviderUnavailable) when the service is unreachable or
  /// answers badly, Error(kDimensionMismatch) on wrong vector length.
  std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override;

 private:
  HttpEmbeddingConfig config_;
  std::shared_ptr<HttpTransport> transport_;
};

/// Normalized embeddings keyed by (provider name, sha256 of text).
///
/// On disk: a binary file of little-endian float32 values and a JSON
/// manifest listing each key with its offset and dimension.
class EmbeddingCache {
 public:
  std::optional<EmbeddingVector> lookup(std::string_view provider,
                                        std::string_view content_hash) const;
  void insert(std::string_view provider, std::string_view content_hash,
              EmbeddingVector vector);
  std::size_t size() const;

  void save(const std::filesystem::path& binary_path,
            const std::filesystem::path& manifest_path) const;
  static std::shared_ptr<EmbeddingCache> load(const std::filesystem::path& binary_path,
                                              const std::filesystem::path& manifest_path);

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::string>, EmbeddingVector, std::less<>> entries_;
};

/// Cache-fronted embedding. Misses are sent to the provider in batches.
class CachedEmbedder {
 public:
  CachedEmbedder(std::shared_ptr<EmbeddingProvider> provider,
                 std::shared_ptr<EmbeddingCache> cache, std::size_t batch_size = 32);

  /// One unit-norm vector per text, order preserved. Throws
  /// Error(kInvalidArgument) for an empty list and Error(kDimensionMismatch)
  /// if the provider returns vectors of the wrong length.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  std::size_t dim() const { return provider_->dim(); }
  const std::string& provider_name() const noexcept { return provider_name_; }
  std::size_t provider_calls() const noexcept { return provider_calls_; }
  const std::shared_ptr<EmbeddingCache>& cache() const noexcept { return cache_; }

 private:
  std::shared_ptr<EmbeddingProvider> provider_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::size_t batch_size_;
  std::string provider_name_;
  std::atomic<std::size_t> provider_calls_{0};
};

/// Exact inner-product search over unit vectors.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dim);

  /// Throws Error(kDimensionMismatch) or Error(kDuplicateChunk). Vectors are
  /// renormalized if their norm is off by more than 1e-6.
  void add(const std::string& chunk_id, EmbeddingVector vector);
  void add_batch(std::span<const std::string> chunk_ids, std::span<const EmbeddingVector> vectors);
  void remove(std::span<const std::string> chunk_ids);
  bool contains(std::string_view chunk_id) const;
  const EmbeddingVector* vector(std::string_view chunk_id) const;

  /// Exact top-k by inner product, descending, ties by ascending chunk id.
  /// Throws Error(kEmptyStore) or Error(kDimensionMismatch).
  std::vector<RetrievedHit> search(const EmbeddingVector& query, std::size_t k) const;

  std::size_t size() const noexcept { return vectors_.size(); }
  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
  std::map<std::string, EmbeddingVector, std::less<>> vectors_;
};

}  // namespace hybridrag
