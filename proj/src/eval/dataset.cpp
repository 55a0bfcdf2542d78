#include "hybridrag/eval/dataset.hpp"

#include <set>

#include <json.hpp>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag::eval {

using nlohmann::json;

namespace {

[[noreturn]] void record_error(std::size_t index, const std::string& what) {
  throw Error(ErrorCode::kParseError, "record " + std::to_string(index) + ": " + what);
}

std::vector<std::string> string_list(const json& obj, const char* key, std::size_t index) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) record_error(index, std::string(key) + " must be an array of strings");
  for (const auto& v : *it) {
    if (!v.is_string()) record_error(index, std::string(key) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::string required_string(const json& obj, const char* key, std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) record_error(index, std::string("missing ") + key);
  return it->get<std::string>();
}

Dataset parse_squad(std::string_view text, std::string name) {
  auto root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object() || !root.contains("data") ||
      !root["data"].is_array()) {
    throw Error(ErrorCode::kParseError, "squad_json: expected an object with a data array");
  }
  Dataset out{std::move(name), {}, {}};
  std::set<std::string> seen_keys;
  std::size_t record = 1;
  std::size_t article_index = 0;
  for (const auto& article : root["data"]) {
    if (!article.is_object() || !article.contains("paragraphs") ||
        !article["paragraphs"].is_array()) {
      throw Error(ErrorCode::kParseError,
                  "article " + std::to_string(article_index) + ": missing paragraphs");
    }
    std::string title = article.value("title", "article" + std::to_string(article_index));
    std::size_t pi = 0;
    for (const auto& para : article["paragraphs"]) {
      std::string key = title + "/" + std::to_string(pi++);
      if (!para.is_object() || !para.contains("context") || !para["context"].is_string()) {
        throw Error(ErrorCode::kParseError, "paragraph " + key + ": missing context");
      }
      if (seen_keys.insert(key).second) out.passages.push_back({key, para["context"]});
      if (!para.contains("qas")) continue;
      if (!para["qas"].is_array()) throw Error(ErrorCode::kParseError, "paragraph " + key + ": qas");
      for (const auto& qa : para["qas"]) {
        if (!qa.is_object()) record_error(record, "question must be an object");
        EvalQuery q;
        q.question = required_string(qa, "question", record);
        if (auto id = qa.find("id"); id != qa.end() && id->is_string()) {
          q.query_id = id->get<std::string>();
        } else {
          q.query_id = "q" + std::to_string(record);
        }
        if (auto ans = qa.find("answers"); ans != qa.end()) {
          if (!ans->is_array()) record_error(record, "answers must be an array");
          for (const auto& a : *ans) {
            if (!a.is_object() || !a.contains("text") || !a["text"].is_string()) {
              record_error(record, "answer without text");
            }
            q.gold_answers.push_back(a["text"]);
          }
        }
        q.relevant_doc_keys.push_back(key);
        out.queries.push_back(std::move(q));
        ++record;
      }
    }
    ++article_index;
  }
  return out;
}

std::string passage_key(std::string_view text) { return "p" + sha256_hex(text).substr(0, 16); }

Dataset parse_tsv(std::string_view text, std::string name) {
  Dataset out{std::move(name), {}, {}};
  std::set<std::string> seen_keys;
  auto add_passage = [&](std::string body) {
    auto key = passage_key(body);
    if (seen_keys.insert(key).second) out.passages.push_back({key, std::move(body)});
    return key;
  };
  std::size_t line_no = 1;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      ++line_no;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 3 && fields.size() != 4) {
      record_error(line_no, "expected 3 or 4 tab-separated fields");
    }
    if (trim(fields[0]).empty() || trim(fields[1]).empty()) {
      record_error(line_no, "empty question or positive passage");
    }
    EvalQuery q;
    q.query_id = "q" + std::to_string(line_no);
    q.question = fields[0];
    q.relevant_doc_keys.push_back(add_passage(fields[1]));
    if (!trim(fields[2]).empty()) add_passage(fields[2]);
    if (fields.size() == 4) {
      for (auto& a : split(fields[3], '|')) {
        if (!trim(a).empty()) q.gold_answers.push_back(a);
      }
    }
    out.queries.push_back(std::move(q));
    ++line_no;
  }
  return out;
}

Dataset parse_jsonl(std::string_view text, std::string name) {
  Dataset out{std::move(name), {}, {}};
  std::set<std::string> seen_ids;
  std::set<std::string> seen_keys;
  std::size_t record = 1;
  for (auto line : split(text, '\n')) {
    if (trim(line).empty()) {
      ++record;
      continue;
    }
    auto obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) record_error(record, "not a JSON object");
    if (obj.contains("question") || obj.contains("query_id")) {
      EvalQuery q;
      q.query_id = required_string(obj, "query_id", record);
      q.question = required_string(obj, "question", record);
      q.gold_answers = string_list(obj, "gold_answers", record);
      q.relevant_doc_keys = string_list(obj, "relevant_doc_keys", record);
      if (q.gold_answers.empty() && q.relevant_doc_keys.empty()) {
        record_error(record, "query needs gold_answers or relevant_doc_keys");
      }
      if (!seen_ids.insert(q.query_id).second) record_error(record, "duplicate query_id");
      out.queries.push_back(std::move(q));
    } else if (obj.contains("text")) {
      Passage p{required_string(obj, "key", record), required_string(obj, "text", record)};
      if (!seen_keys.insert(p.key).second) record_error(record, "duplicate passage key");
      out.passages.push_back(std::move(p));
    } else {
      record_error(record, "neither a query nor a passage");
    }
    ++record;
  }
  return out;
}

}  // namespace

std::string_view to_string(DatasetFormat format) noexcept {
  switch (format) {
    case DatasetFormat::kSquadJson: return "squad_json";
    case DatasetFormat::kTsvTriples: return "tsv_triples";
    case DatasetFormat::kJsonlGeneric: return "jsonl_generic";
  }
  return "unknown";
}

std::optional<DatasetFormat> parse_dataset_format(std::string_view text) noexcept {
  if (text == "squad_json") return DatasetFormat::kSquadJson;
  if (text == "tsv_triples") return DatasetFormat::kTsvTriples;
  if (text == "jsonl_generic") return DatasetFormat::kJsonlGeneric;
  return std::nullopt;
}

std::optional<DatasetFormat> guess_dataset_format(const std::filesystem::path& path) noexcept {
  auto ext = ascii_lower(path.extension().string());
  if (ext == ".json") return DatasetFormat::kSquadJson;
  if (ext == ".tsv") return DatasetFormat::kTsvTriples;
  if (ext == ".jsonl") return DatasetFormat::kJsonlGeneric;
  return std::nullopt;
}

Dataset parse_dataset(std::string_view text, DatasetFormat format, std::string name) {
  switch (format) {
    case DatasetFormat::kSquadJson: return parse_squad(text, std::move(name));
    case DatasetFormat::kTsvTriples: return parse_tsv(text, std::move(name));
    case DatasetFormat::kJsonlGeneric: return parse_jsonl(text, std::move(name));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown dataset format");
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  return parse_dataset(read_file(path), format, path.stem().string());
}

}  // namespace hybridrag::eval
