#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hybridrag::eval {

struct EvalQuery {
  std::string query_id;
  std::string question;
  std::vector<std::string> gold_answers;
  std::vector<std::string> relevant_doc_keys;
};

/// A retrievable unit of the evaluation corpus.
struct Passage {
  std::string key;
  std::string text;
};

struct Dataset {
  std::string name;
  std::vector<EvalQuery> queries;
  std::vector<Passage> passages;
};

enum class DatasetFormat { kSquadJson, kTsvTriples, kJsonlGeneric };

std::string_view to_string(DatasetFormat format) noexcept;
/// Accepts squad_json, tsv_triples, jsonl_generic.
std::optional<DatasetFormat> parse_dataset_format(std::string_view text) noexcept;
/// .json -> squad_json, .tsv -> tsv_triples, .jsonl -> jsonl_generic.
std::optional<DatasetFormat> guess_dataset_format(const std::filesystem::path& path) noexcept;

/// Formats:
///   squad_json     SQuAD v1.1 layout. Paragraph keys are "{title}/{index}".
///   tsv_triples    question \t positive \t negative [\t answer|answer...].
///                  Query ids are "q{line}", passage keys "p" + 16 hex digits
///                  of the passage text's SHA-256.
///   jsonl_generic  one object per line, either a query
///                  {"query_id", "question", "gold_answers", "relevant_doc_keys"}
///                  or a passage {"key", "text"}.
/// Throws Error(kParseError) naming the record index; Error(kIoError) if
/// the file cannot be read.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
Dataset parse_dataset(std::string_view text, DatasetFormat format, std::string name);

}  // namespace hybridrag::eval
