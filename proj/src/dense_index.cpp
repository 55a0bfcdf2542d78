#include "hybridrag/dense_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include <json.hpp>

#include "hybridrag/error.hpp"
#include "hybridrag/sparse_index.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;

double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "dimension mismatch");
  const double na = std::sqrt(dot(a.values, a.values));
  const double nb = std::sqrt(dot(b.values, b.values));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a.values, b.values) / (na * nb);
}

void l2_normalize(std::vector<float>& values) {
  double sq = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite embedding value");
    sq += static_cast<double>(v) * v;
  }
  if (values.empty()) return;
  if (sq == 0.0) {
    values[0] = 1.0f;
    return;
  }
  const double norm = std::sqrt(sq);
  for (float& v : values) v = static_cast<float>(static_cast<double>(v) / norm);
}

EmbeddingVector hash_embed(std::string_view text, std::size_t dim) {
  if (dim < 8) throw Error(ErrorCode::kInvalidArgument, "hash_embed requires dim >= 8");
  std::vector<double> acc(dim, 0.0);
  for (const auto& term : tokenize(text)) {
    const std::uint64_t h = fnv1a64(term);
    acc[h % dim] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  double sq = 0.0;
  for (double v : acc) sq += v * v;
  EmbeddingVector out;
  out.values.assign(dim, 0.0f);
  if (sq == 0.0) {
    out.values[0] = 1.0f;
    return out;
  }
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < dim; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  return out;
}

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim < 8) throw Error(ErrorCode::kInvalidArgument, "hash embedder requires dim >= 8");
}

std::string HashEmbeddingProvider::name() const { return "hash-fnv1a-d" + std::to_string(dim_); }

std::vector<std::vector<float>> HashEmbeddingProvider::embed_raw(
    std::span<const std::string> texts) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(hash_embed(t, dim_).values);
  return out;
}

HttpEmbeddingConfig HttpEmbeddingConfig::from_env() {
  HttpEmbeddingConfig c;
  if (const char* v = std::getenv("HYBRIDRAG_EMBED_URL")) c.url = v;
  if (const char* v = std::getenv("HYBRIDRAG_EMBED_MODEL")) c.model = v;
  if (auto v = env_positive_int("HYBRIDRAG_EMBED_DIM")) c.dim = static_cast<std::size_t>(*v);
  return c;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config,
                                             std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) transport_ = std::make_shared<HttplibTransport>();
}

std::string HttpEmbeddingProvider::name() const {
  return "http:" + config_.model + ":d" + std::to_string(config_.dim);
}

std::vector<std::vector<float>> HttpEmbeddingProvider::embed_raw(
    std::span<const std::string> texts) {
  json body{{"model", config_.model},
            {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  HttpResponse resp;
  try {
    resp = transport_->post({config_.url, body.dump(), "application/json", {}, config_.timeout});
  } catch (const Error&) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding provider unavailable");
  }
  if (resp.status < 200 || resp.status >= 300) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding provider returned an error");
  }
  std::vector<std::vector<float>> out;
  try {
    auto j = json::parse(resp.body);
    out = j.at("embeddings").get<std::vector<std::vector<float>>>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding provider sent a malformed body");
  }
  if (out.size() != texts.size()) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding provider returned wrong count");
  }
  for (const auto& v : out) {
    if (v.size() != config_.dim) {
      throw Error(ErrorCode::kDimensionMismatch, "embedding dimension mismatch");
    }
  }
  return out;
}

std::optional<EmbeddingVector> EmbeddingCache::lookup(std::string_view provider,
                                                      std::string_view content_hash) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(std::pair{std::string(provider), std::string(content_hash)});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::insert(std::string_view provider, std::string_view content_hash,
                            EmbeddingVector vector) {
  std::unique_lock lock(mutex_);
  entries_.insert_or_assign(std::pair{std::string(provider), std::string(content_hash)},
                            std::move(vector));
}

std::size_t EmbeddingCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void EmbeddingCache::save(const std::filesystem::path& binary_path,
                          const std::filesystem::path& manifest_path) const {
  std::shared_lock lock(mutex_);
  std::string blob;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& [key, vec] : entries_) {
    entries.push_back({{"provider", key.first},
                       {"hash", key.second},
                       {"offset", offset},
                       {"dim", vec.dim()}});
    for (float f : vec.values) {
      std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(f));
      char buf[4];
      std::memcpy(buf, &bits, 4);
      blob.append(buf, 4);
    }
    offset += vec.dim();
  }
  json manifest{{"version", 1}, {"format", "float32-le"}, {"entries", std::move(entries)}};
  write_file_atomic(binary_path, blob);
  write_file_atomic(manifest_path, manifest.dump(1));
}

std::shared_ptr<EmbeddingCache> EmbeddingCache::load(const std::filesystem::path& binary_path,
                                                     const std::filesystem::path& manifest_path) {
  auto cache = std::make_shared<EmbeddingCache>();
  if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(binary_path)) {
    return cache;
  }
  const std::string blob = read_file(binary_path);
  try {
    auto manifest = json::parse(read_file(manifest_path));
    for (const auto& e : manifest.at("entries")) {
      const auto offset = e.at("offset").get<std::size_t>();
      const auto dim = e.at("dim").get<std::size_t>();
      if ((offset + dim) * 4 > blob.size()) {
        throw Error(ErrorCode::kParseError, "embedding cache: entry past end of data");
      }
      EmbeddingVector v;
      v.values.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, blob.data() + (offset + i) * 4, 4);
        v.values[i] = std::bit_cast<float>(to_little_endian(bits));
      }
      cache->entries_.emplace(
          std::pair{e.at("provider").get<std::string>(), e.at("hash").get<std::string>()},
          std::move(v));
    }
  } catch (const json::exception&) {
    throw Error(ErrorCode::kParseError, "embedding cache: malformed manifest");
  }
  return cache;
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<EmbeddingProvider> provider,
                               std::shared_ptr<EmbeddingCache> cache, std::size_t batch_size)
    : provider_(std::move(provider)),
      cache_(std::move(cache)),
      batch_size_(std::max<std::size_t>(batch_size, 1)) {
  if (!provider_) throw Error(ErrorCode::kInvalidArgument, "embedder requires a provider");
  provider_name_ = provider_->name();
}

std::vector<EmbeddingVector> CachedEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorCode::kInvalidArgument, "embed requires at least one text");
  const std::size_t dim = provider_->dim();
  std::vector<EmbeddingVector> out(texts.size());
  std::vector<std::string> hashes(texts.size());
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache_) {
      hashes[i] = sha256_hex(texts[i]);
      if (auto hit = cache_->lookup(provider_name_, hashes[i])) {
        out[i] = std::move(*hit);
        continue;
      }
    }
    misses.push_back(i);
  }
  for (std::size_t pos = 0; pos < misses.size(); pos += batch_size_) {
    const std::size_t end = std::min(misses.size(), pos + batch_size_);
    std::vector<std::string> batch;
    for (std::size_t m = pos; m < end; ++m) batch.push_back(texts[misses[m]]);
    ++provider_calls_;
    auto raw = provider_->embed_raw(batch);
    if (raw.size() != batch.size()) {
      throw Error(ErrorCode::kProviderUnavailable, "provider returned wrong number of vectors");
    }
    for (std::size_t m = pos; m < end; ++m) {
      auto& values = raw[m - pos];
      if (values.size() != dim) {
        throw Error(ErrorCode::kDimensionMismatch, "embedding dimension mismatch");
      }
      l2_normalize(values);
      EmbeddingVector v{std::move(values)};
      if (cache_) cache_->insert(provider_name_, hashes[misses[m]], v);
      out[misses[m]] = std::move(v);
    }
  }
  return out;
}

EmbeddingVector CachedEmbedder::embed_one(const std::string& text) {
  return std::move(embed(std::span<const std::string>(&text, 1)).front());
}

VectorStore::VectorStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "vector store requires dim >= 1");
}

void VectorStore::add(const std::string& chunk_id, EmbeddingVector vector) {
  if (vector.dim() != dim_) throw Error(ErrorCode::kDimensionMismatch, "dimension mismatch");
  if (contains(chunk_id)) throw Error(ErrorCode::kDuplicateChunk, "duplicate chunk " + chunk_id);
  const double norm = std::sqrt(dot(vector.values, vector.values));
  if (!std::isfinite(norm)) throw Error(ErrorCode::kInvalidArgument, "non-finite embedding");
  if (std::abs(norm - 1.0) > 1e-6) l2_normalize(vector.values);
  vectors_.emplace(chunk_id, std::move(vector));
}

void VectorStore::add_batch(std::span<const std::string> chunk_ids,
                            std::span<const EmbeddingVector> vectors) {
  if (chunk_ids.size() != vectors.size()) {
    throw Error(ErrorCode::kInvalidArgument, "ids and vectors differ in length");
  }
  for (std::size_t i = 0; i < chunk_ids.size(); ++i) {
    if (vectors[i].dim() != dim_) throw Error(ErrorCode::kDimensionMismatch, "dimension mismatch");
    if (contains(chunk_ids[i]) ||
        std::find(chunk_ids.begin(), chunk_ids.begin() + static_cast<std::ptrdiff_t>(i),
                  chunk_ids[i]) != chunk_ids.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw Error(ErrorCode::kDuplicateChunk, "duplicate chunk " + chunk_ids[i]);
    }
  }
  for (std::size_t i = 0; i < chunk_ids.size(); ++i) add(chunk_ids[i], vectors[i]);
}

void VectorStore::remove(std::span<const std::string> chunk_ids) {
  for (const auto& id : chunk_ids) {
    auto it = vectors_.find(id);
    if (it != vectors_.end()) vectors_.erase(it);
  }
}

bool VectorStore::contains(std::string_view chunk_id) const {
  return vectors_.find(chunk_id) != vectors_.end();
}

const EmbeddingVector* VectorStore::vector(std::string_view chunk_id) const {
  auto it = vectors_.find(chunk_id);
  return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<RetrievedHit> VectorStore::search(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (vectors_.empty()) throw Error(ErrorCode::kEmptyStore, "empty store");
  if (query.dim() != dim_) throw Error(ErrorCode::kDimensionMismatch, "dimension mismatch");
  std::vector<RetrievedHit> hits;
  hits.reserve(vectors_.size());
  for (const auto& [id, vec] : vectors_) {
    hits.push_back({id, dot(query.values, vec.values), 0, HitSource::kDense});
  }
  auto order = [](const RetrievedHit& a, const RetrievedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
  };
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    order);
  hits.resize(take);
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
  return hits;
}

}  // namespace hybridrag
