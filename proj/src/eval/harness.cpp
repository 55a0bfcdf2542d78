#include "hybridrag/eval/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hybridrag/error.hpp"
#include "hybridrag/util.hpp"

namespace hybridrag::eval {

namespace {

std::string opt_field(const std::optional<double>& v) {
  return v ? format_fixed(*v) : std::string("NA");
}

void append_report(std::ostringstream& os, const MetricReport& r) {
  os << format_fixed(r.mrr);
  for (std::size_t k : kRecallCutoffs) os << ',' << format_fixed(r.recall_at.at(k));
  os << ',' << format_fixed(r.em) << ',' << format_fixed(r.answer_coverage) << ','
     << opt_field(r.mean_rank) << ',' << opt_field(r.median_rank) << ',' << r.rank1_count << ','
     << r.n_queries << '\n';
}

std::vector<std::string> csv_fields(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> csv_lines(std::string_view text) {
  std::vector<std::string> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) out.push_back(std::move(line));
  }
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto t = trim(s);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": not a number");
  }
  return v;
}

}  // namespace

EvalHarness::EvalHarness(Dataset dataset, std::shared_ptr<CachedEmbedder> embedder,
                         KnowledgeBaseConfig kb_config, HarnessOptions options)
    : dataset_(std::move(dataset)), options_(options) {
  options_.fusion.validate();
  kb_config.on_duplicate = DuplicatePolicy::kSkip;
  kb_ = std::make_unique<KnowledgeBase>(std::move(embedder), kb_config);
  for (const auto& p : dataset_.passages) {
    auto report = kb_->ingest_bytes(p.text, DocumentFormat::kText, p.key);
    doc_keys_[report.doc_id].push_back(p.key);
  }
  const std::size_t depth = leg_depth(options_.fusion.k);
  legs_.reserve(dataset_.queries.size());
  for (const auto& q : dataset_.queries) legs_.push_back(kb_->search_legs(q.question, depth));
}

std::span<const std::string> EvalHarness::doc_keys_of(std::string_view chunk_id) const {
  auto chunk = kb_->chunk(chunk_id);
  if (!chunk) return {};
  auto it = doc_keys_.find(chunk->doc_id);
  if (it == doc_keys_.end()) return {};
  return it->second;
}

QueryResult EvalHarness::score(const EvalQuery& query, std::vector<RetrievedHit> hits) const {
  if (hits.size() > options_.fusion.k) hits.resize(options_.fusion.k);
  QueryResult r;
  r.query_id = query.query_id;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    auto chunk = kb_->chunk(hits[i].chunk_id);
    const std::string text = chunk ? chunk->text : std::string();
    if (!r.first_relevant_rank && relevance(doc_keys_of(hits[i].chunk_id), text, query)) {
      r.first_relevant_rank = i + 1;
    }
    if (i == 0) r.exact_match = token_span_match(text, query.gold_answers);
    if (i < options_.coverage_depth) texts.push_back(text);
  }
  r.answer_covered = answer_coverage_flag(texts, query.gold_answers);
  r.hits = std::move(hits);
  return r;
}

std::vector<QueryResult> EvalHarness::run_fused(const FusionWeights& weights) const {
  weights.validate();
  std::vector<QueryResult> out;
  out.reserve(legs_.size());
  for (std::size_t i = 0; i < legs_.size(); ++i) {
    out.push_back(score(dataset_.queries[i],
                        fuse(legs_[i].sparse, legs_[i].dense, weights, options_.fusion)));
  }
  return out;
}

std::vector<QueryResult> EvalHarness::run_leg(HitSource leg) const {
  if (leg == HitSource::kFused) throw Error(ErrorCode::kInvalidArgument, "run_leg needs a leg");
  std::vector<QueryResult> out;
  out.reserve(legs_.size());
  for (std::size_t i = 0; i < legs_.size(); ++i) {
    out.push_back(
        score(dataset_.queries[i], leg == HitSource::kSparse ? legs_[i].sparse : legs_[i].dense));
  }
  return out;
}

std::vector<double> default_sweep_weights() {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(static_cast<double>(i) / 10.0);
  return out;
}

std::vector<SweepRow> weight_sweep(const EvalHarness& harness, std::span<const double> weights) {
  std::vector<SweepRow> rows;
  rows.reserve(weights.size());
  for (double w : weights) {
    SweepRow row;
    row.weight = w;
    row.results = harness.run_fused(FusionWeights::from_sparse(w));
    row.report = compute_metrics(row.results);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablation(const EvalHarness& harness, FusionWeights hybrid) {
  std::vector<AblationRow> rows;
  auto add = [&](std::string mode, FusionWeights w, std::vector<QueryResult> results) {
    AblationRow row{std::move(mode), w, compute_metrics(results), std::move(results)};
    rows.push_back(std::move(row));
  };
  add("sparse", FusionWeights{1.0, 0.0}, harness.run_leg(HitSource::kSparse));
  add("dense", FusionWeights{0.0, 1.0}, harness.run_leg(HitSource::kDense));
  add("hybrid", hybrid, harness.run_fused(hybrid));
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream os;
  os << kSweepHeader << '\n';
  for (const auto& r : rows) {
    os << format_fixed(r.weight, 2) << ',';
    append_report(os, r.report);
  }
  return os.str();
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << kAblationHeader << '\n';
  for (const auto& r : rows) {
    os << r.mode << ',' << format_fixed(r.weights.sparse_w, 2) << ','
       << format_fixed(r.weights.dense_w, 2) << ',';
    append_report(os, r.report);
  }
  return os.str();
}

std::string per_query_csv(std::span<const QueryResult> results) {
  std::ostringstream os;
  os << kPerQueryHeader << '\n';
  for (const auto& q : results) {
    os << csv_escape(q.query_id) << ',';
    if (q.first_relevant_rank) {
      os << *q.first_relevant_rank << ','
         << format_fixed(1.0 / static_cast<double>(*q.first_relevant_rank));
    } else {
      os << "NA," << format_fixed(0.0);
    }
    for (std::size_t k : kRecallCutoffs) {
      os << ',' << (q.first_relevant_rank && *q.first_relevant_rank <= k ? 1 : 0);
    }
    os << ',' << (q.answer_covered ? 1 : 0) << ',' << (q.exact_match ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

std::string filename_safe(std::string_view text) {
  std::string out;
  for (char c : text) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out;
}

}  // namespace

std::string result_filename(std::string_view dataset, std::string_view mode, std::uint64_t seed,
                            std::string_view extension) {
  std::string name = filename_safe(dataset);
  if (name.empty()) name = "dataset";
  return name + "_" + filename_safe(mode) + "_seed" + std::to_string(seed) + std::string(extension);
}

std::vector<double> csv_column(std::string_view csv_text, std::string_view column) {
  auto lines = csv_lines(csv_text);
  if (lines.empty()) throw Error(ErrorCode::kParseError, "empty CSV");
  auto header = csv_fields(lines[0]);
  auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) {
    throw Error(ErrorCode::kParseError, "no column named " + std::string(column));
  }
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = csv_fields(lines[i]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(i + 1) + ": field count");
    }
    out.push_back(parse_number(fields[col], i + 1));
  }
  return out;
}

std::string bootstrap_csv(std::string_view metric, std::span<const double> values,
                          std::size_t n_resamples, std::uint64_t seed) {
  auto ci = bootstrap_ci(values, n_resamples, seed);
  std::ostringstream os;
  os << kBootstrapHeader << '\n';
  auto row = [&](const ConfidenceInterval& c) {
    os << csv_escape(metric) << ',' << to_string(c.method) << ',' << format_fixed(c.point) << ','
       << format_fixed(c.lo) << ',' << format_fixed(c.hi) << ',' << c.n_resamples << ','
       << values.size() << '\n';
  };
  row(ci);
  const bool binary =
      std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0 || v == 1.0; });
  if (binary) {
    auto successes = static_cast<std::size_t>(std::count(values.begin(), values.end(), 1.0));
    row(wilson_interval(successes, values.size()));
  }
  return os.str();
}

OptimalWeight select_optimal_weight(std::span<const std::vector<SweepRow>> per_dataset) {
  if (per_dataset.empty()) throw Error(ErrorCode::kEmptyInput, "no sweeps to compare");
  OptimalWeight out;
  std::map<double, std::size_t> votes;
  for (const auto& rows : per_dataset) {
    if (rows.empty()) throw Error(ErrorCode::kEmptyInput, "empty sweep");
    std::vector<double> score(rows.size(), 0.0);
    auto add_column = [&](auto getter) {
      double lo = getter(rows[0]);
      double hi = lo;
      for (const auto& r : rows) {
        lo = std::min(lo, getter(r));
        hi = std::max(hi, getter(r));
      }
      if (hi <= lo) return;
      for (std::size_t i = 0; i < rows.size(); ++i) score[i] += (getter(rows[i]) - lo) / (hi - lo);
    };
    add_column([](const SweepRow& r) { return r.report.mrr; });
    add_column([](const SweepRow& r) { return r.report.recall_at.at(10); });
    add_column([](const SweepRow& r) { return r.report.answer_coverage; });
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (score[i] > score[best] || (score[i] == score[best] && rows[i].weight < rows[best].weight)) {
        best = i;
      }
    }
    out.per_dataset.push_back(rows[best].weight);
    ++votes[rows[best].weight];
  }
  std::size_t top = 0;
  for (const auto& [w, n] : votes) {
    if (n > top) {
      top = n;
      out.overall = w;
    }
  }
  return out;
}

std::vector<ReferenceRow> parse_reference_csv(std::string_view csv_text) {
  auto lines = csv_lines(csv_text);
  if (lines.empty()) throw Error(ErrorCode::kParseError, "empty reference CSV");
  auto header = csv_fields(lines[0]);
  auto index = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorCode::kParseError, "reference CSV lacks column " + std::string(name));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_ds = index("dataset"), c_m = index("method"), c_mrr = index("mrr"),
             c_r10 = index("recall@10"), c_cov = index("answer_coverage"),
             c_rank = index("mean_rank");
  std::vector<ReferenceRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = csv_fields(lines[i]);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(i + 1) + ": field count");
    }
    ReferenceRow r;
    r.dataset = f[c_ds];
    r.method = f[c_m];
    r.mrr = parse_number(f[c_mrr], i + 1);
    r.recall_at_10 = parse_number(f[c_r10], i + 1);
    r.answer_coverage = parse_number(f[c_cov], i + 1);
    if (trim(f[c_rank]) != "NA" && !trim(f[c_rank]).empty()) {
      r.mean_rank = parse_number(f[c_rank], i + 1);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string dataset_match_key(std::string_view name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<DiscrepancyNote> discrepancy_notes(std::string_view dataset,
                                               std::span<const AblationRow> rows,
                                               std::span<const ReferenceRow> reference) {
  std::vector<DiscrepancyNote> out;
  const auto ds = dataset_match_key(dataset);
  for (const auto& row : rows) {
    for (const auto& ref : reference) {
      if (dataset_match_key(ref.dataset) != ds || ascii_lower(ref.method) != ascii_lower(row.mode)) {
        continue;
      }
      const double r10 = row.report.recall_at.at(10);
      out.push_back({ref.dataset, row.mode, "recall@10", r10, ref.recall_at_10,
                     std::abs(r10 - ref.recall_at_10) > kRecallDriftThreshold});
      out.push_back({ref.dataset, row.mode, "mrr", row.report.mrr, ref.mrr,
                     std::abs(row.report.mrr - ref.mrr) > kMrrDriftThreshold});
    }
  }
  return out;
}

std::string discrepancy_csv(std::span<const DiscrepancyNote> notes) {
  std::ostringstream os;
  os << kDiscrepancyHeader << '\n';
  for (const auto& n : notes) {
    const double threshold = n.metric == "mrr" ? kMrrDriftThreshold : kRecallDriftThreshold;
    os << csv_escape(n.dataset) << ',' << n.method << ',' << n.metric << ','
       << format_fixed(n.observed) << ',' << format_fixed(n.reference) << ','
       << format_fixed(std::abs(n.observed - n.reference)) << ',' << format_fixed(threshold, 3)
       << ',' << (n.exceeds ? "yes" : "no") << '\n';
  }
  return os.str();
}

}  // namespace hybridrag::eval
