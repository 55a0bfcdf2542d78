#include "hybridrag/sparse_index.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') {
      current.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      current.push_back(ch);
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

void Bm25Params::validate() const {
  if (!(k1 >= 0.0) || !(b >= 0.0 && b <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bm25 requires k1 >= 0 and 0 <= b <= 1");
  }
}

SparseIndex::SparseIndex(Bm25Params params) : params_(params) { params_.validate(); }

void SparseIndex::add_chunks(std::span<const Chunk> chunks) {
  std::set<std::string_view> batch;
  for (const auto& c : chunks) {
    if (contains(c.chunk_id) || !batch.insert(c.chunk_id).second) {
      throw Error(ErrorCode::kDuplicateChunk, "duplicate chunk " + c.chunk_id);
    }
  }
  for (const auto& c : chunks) {
    auto terms = tokenize(c.text);
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : terms) ++tf[std::move(t)];
    for (auto& [term, count] : tf) {
      auto& list = postings_[term];
      auto it = std::lower_bound(
          list.begin(), list.end(), c.chunk_id,
          [](const Posting& p, const std::string& id) { return p.chunk_id < id; });
      list.insert(it, Posting{c.chunk_id, count});
    }
    doc_lengths_.emplace(c.chunk_id, terms.size());
    total_length_ += terms.size();
  }
}

void SparseIndex::remove_chunks(std::span<const std::string> chunk_ids) {
  std::set<std::string, std::less<>> doomed;
  for (const auto& id : chunk_ids) {
    auto it = doc_lengths_.find(id);
    if (it == doc_lengths_.end()) continue;
    total_length_ -= it->second;
    doc_lengths_.erase(it);
    doomed.insert(id);
  }
  if (doomed.empty()) return;
  for (auto it = postings_.begin(); it != postings_.end();) {
    auto& list = it->second;
    std::erase_if(list, [&](const Posting& p) { return doomed.count(p.chunk_id) > 0; });
    it = list.empty() ? postings_.erase(it) : std::next(it);
  }
}

double SparseIndex::avg_doc_length() const noexcept {
  if (doc_lengths_.empty()) return 0.0;
  return static_cast<double>(total_length_) / static_cast<double>(doc_lengths_.size());
}

std::size_t SparseIndex::document_frequency(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  return it == postings_.end() ? 0 : it->second.size();
}

double SparseIndex::idf(std::string_view term) const {
  const double n = static_cast<double>(n_docs());
  const double df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::size_t SparseIndex::doc_length(std::string_view chunk_id) const {
  auto it = doc_lengths_.find(chunk_id);
  return it == doc_lengths_.end() ? 0 : it->second;
}

bool SparseIndex::contains(std::string_view chunk_id) const {
  return doc_lengths_.find(chunk_id) != doc_lengths_.end();
}

const std::vector<Posting>* SparseIndex::postings(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  return it == postings_.end() ? nullptr : &it->second;
}

std::vector<RetrievedHit> SparseIndex::search(std::string_view query_text,
                                              std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (n_docs() == 0) throw Error(ErrorCode::kEmptyIndex, "empty index");

  std::map<std::string, std::size_t> query_tf;
  for (auto& t : tokenize(query_text)) ++query_tf[std::move(t)];

  const double avgdl = avg_doc_length();
  const double k1 = params_.k1;
  const double b = params_.b;
  std::unordered_map<std::string_view, double> scores;
  for (const auto& [term, qtf] : query_tf) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double term_idf = idf(term);
    for (const auto& p : it->second) {
      const double tf = p.term_frequency;
      const double dl = static_cast<double>(doc_lengths_.find(p.chunk_id)->second);
      const double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
      const double s = term_idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
      scores[p.chunk_id] += static_cast<double>(qtf) * s;
    }
  }

  std::vector<RetrievedHit> hits;
  hits.reserve(scores.size());
  for (const auto& [id, score] : scores) {
    if (score > 0.0) hits.push_back({std::string(id), score, 0, HitSource::kSparse});
  }
  auto order = [](const RetrievedHit& a, const RetrievedHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk_id < b.chunk_id;
  };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k),
                      hits.end(), order);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), order);
  }
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
  return hits;
}

json SparseIndex::to_json() const {
  json postings = json::object();
  for (const auto& [term, list] : postings_) {
    json entries = json::array();
    for (const auto& p : list) entries.push_back({p.chunk_id, p.term_frequency});
    postings[term] = std::move(entries);
  }
  json lengths = json::object();
  for (const auto& [id, len] : doc_lengths_) lengths[id] = len;
  return json{{"version", 1},
              {"params", {{"k1", params_.k1}, {"b", params_.b}}},
              {"doc_lengths", std::move(lengths)},
              {"postings", std::move(postings)}};
}

SparseIndex SparseIndex::from_json(const json& j) {
  try {
    Bm25Params params{j.at("params").at("k1").get<double>(),
                      j.at("params").at("b").get<double>()};
    SparseIndex index(params);
    for (const auto& [id, len] : j.at("doc_lengths").items()) {
      auto n = len.get<std::size_t>();
      index.doc_lengths_.emplace(id, n);
      index.total_length_ += n;
    }
    for (const auto& [term, entries] : j.at("postings").items()) {
      auto& list = index.postings_[term];
      for (const auto& e : entries) {
        list.push_back({e.at(0).get<std::string>(), e.at(1).get<std::uint32_t>()});
      }
      std::sort(list.begin(), list.end(),
                [](const Posting& a, const Posting& b) { return a.chunk_id < b.chunk_id; });
    }
    return index;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("sparse index: ") + e.what());
  }
}

void SparseIndex::save(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump());
}

SparseIndex SparseIndex::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::kParseError, "sparse index: malformed " + path.string());
  }
  return from_json(j);
}

}  // namespace hybridrag
