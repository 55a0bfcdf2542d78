#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hybridrag/dense_index.hpp"
#include "hybridrag/error.hpp"
#include "hybridrag/generation.hpp"
#include "hybridrag/http_transport.hpp"
#include "hybridrag/knowledge_base.hpp"

namespace hybridrag::support {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(HYBRIDRAG_FIXTURE_DIR) / name;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hybridrag_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::shared_ptr<CachedEmbedder> hash_embedder(std::size_t dim = 64) {
  return std::make_shared<CachedEmbedder>(std::make_shared<HashEmbeddingProvider>(dim),
                                          std::make_shared<EmbeddingCache>());
}

/// Returns a fixed answer and records every prompt.
class StubModel final : public LanguageModel {
 public:
  explicit StubModel(std::string reply = "OK") : reply_(std::move(reply)) {}
  std::string complete(const std::string& prompt, const GenerationParams&) override {
    std::lock_guard lock(mutex_);
    prompts.push_back(prompt);
    if (fail_with) throw Error(*fail_with, "stub failure");
    return reply_;
  }
  std::vector<std::string> prompts;
  std::optional<ErrorCode> fail_with;

 private:
  std::mutex mutex_;
  std::string reply_;
};

/// Captures requests; replies through a caller-supplied function.
class FakeTransport final : public HttpTransport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest&)>;
  explicit FakeTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpResponse post(const HttpRequest& request) override {
    requests.push_back(request);
    return handler_(request);
  }
  std::vector<HttpRequest> requests;

 private:
  Handler handler_;
};

/// Provider that fails after a number of successful calls.
class FlakyProvider final : public EmbeddingProvider {
 public:
  FlakyProvider(std::size_t dim, std::size_t good_calls) : inner_(dim), good_calls_(good_calls) {}
  std::string name() const override { return "flaky"; }
  std::size_t dim() const override { return inner_.dim(); }
  std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override {
    if (calls_++ >= good_calls_) throw Error(ErrorCode::kProviderUnavailable, "down");
    return inner_.embed_raw(texts);
  }

 private:
  HashEmbeddingProvider inner_;
  std::size_t good_calls_;
  std::size_t calls_ = 0;
};

inline std::string random_word(std::mt19937_64& rng, std::size_t vocab) {
  return "w" + std::to_string(rng() % vocab);
}

}  // namespace hybridrag::support
