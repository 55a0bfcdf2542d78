#include <csignal>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "hybridrag/config.hpp"
#include "hybridrag/dense_index.hpp"
#include "hybridrag/error.hpp"
#include "hybridrag/eval/dataset.hpp"
#include "hybridrag/eval/harness.hpp"
#include "hybridrag/gateway.hpp"
#include "hybridrag/generation.hpp"
#include "hybridrag/judge.hpp"
#include "hybridrag/knowledge_base.hpp"
#include "hybridrag/protocol.hpp"
#include "hybridrag/tcp_server.hpp"
#include "hybridrag/util.hpp"

namespace fs = std::filesystem;
using namespace hybridrag;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string data_dir;
  std::string results_dir;
  std::string env_file = ".env";
  bool verbose = false;
  Config config;
};

std::uint64_t effective_seed(const Globals& g) {
  if (g.seed_set) return g.seed;
  return static_cast<std::uint64_t>(g.config.get_int("seed", 0));
}

fs::path data_dir(const Globals& g) {
  if (!g.data_dir.empty()) return g.data_dir;
  return g.config.get_string("data_dir", ".hybridrag");
}

fs::path results_dir(const Globals& g) {
  if (!g.results_dir.empty()) return g.results_dir;
  return g.config.get_string("results_dir", "evaluation/results");
}

KnowledgeBaseConfig kb_config(const Config& c) {
  KnowledgeBaseConfig k;
  k.chunking.chunk_size = static_cast<std::size_t>(c.get_int("chunk_size", 350));
  k.chunking.overlap = static_cast<std::size_t>(c.get_int("chunk_overlap", 40));
  k.bm25.k1 = c.get_double("bm25_k1", 1.2);
  k.bm25.b = c.get_double("bm25_b", 0.75);
  k.on_duplicate = c.get_bool("skip_duplicates", true) ? DuplicatePolicy::kSkip
                                                         : DuplicatePolicy::kError;
  return k;
}

FusionConfig fusion_config(const Config& c, std::size_t k) {
  FusionConfig f;
  f.mode = parse_fusion_mode(c.get_string("fusion_mode", "weighted_rrf"));
  f.rrf_k = static_cast<int>(c.get_int("rrf_k", 60));
  f.k = k;
  return f;
}

std::shared_ptr<CachedEmbedder> make_embedder(const Globals& g, bool warm_from_disk) {
  const auto kind = g.config.get_string("embedder", "hash");
  std::shared_ptr<EmbeddingProvider> provider;
  if (kind == "hash") {
    provider = std::make_shared<HashEmbeddingProvider>(
        static_cast<std::size_t>(g.config.get_int("embed_dim", 256)));
  } else if (kind == "http") {
    provider = std::make_shared<HttpEmbeddingProvider>(HttpEmbeddingConfig::from_env(),
                                                       std::make_shared<HttplibTransport>());
  } else {
    throw Error(ErrorCode::kInvalidArgument, "embedder must be hash or http");
  }
  std::shared_ptr<EmbeddingCache> cache;
  const auto dir = data_dir(g);
  if (warm_from_disk && fs::exists(embedding_cache_manifest(dir))) {
    cache = EmbeddingCache::load(embedding_cache_binary(dir), embedding_cache_manifest(dir));
  } else {
    cache = std::make_shared<EmbeddingCache>();
  }
  return std::make_shared<CachedEmbedder>(provider, cache,
                                          static_cast<std::size_t>(g.config.get_int("embed_batch", 32)));
}

std::unique_ptr<KnowledgeBase> open_kb(const Globals& g) {
  const auto dir = data_dir(g);
  auto embedder = make_embedder(g, true);
  if (fs::exists(dir / "documents.jsonl")) {
    return KnowledgeBase::load(dir, embedder, kb_config(g.config));
  }
  return std::make_unique<KnowledgeBase>(embedder, kb_config(g.config));
}

eval::Dataset open_dataset(const std::string& path, const std::string& format) {
  std::optional<eval::DatasetFormat> f =
      format.empty() ? eval::guess_dataset_format(path) : eval::parse_dataset_format(format);
  if (!f) throw Error(ErrorCode::kInvalidArgument, "cannot tell dataset format; pass --format");
  return eval::load_dataset(path, *f);
}

void write_result(const Globals& g, const std::string& name, const std::string& contents) {
  const auto dir = results_dir(g);
  fs::create_directories(dir);
  write_file_atomic(dir / name, contents);
  std::cout << (dir / name).string() << "\n";
}

std::shared_ptr<LanguageModel> make_llm() {
  return std::make_shared<OllamaClient>(LlmEndpointConfig::from_env(),
                                        std::make_shared<HttplibTransport>());
}

GenerationParams generation_params(const Config& c) {
  GenerationParams p;
  p.temperature = c.get_double("temperature", p.temperature);
  p.top_p = c.get_double("top_p", p.top_p);
  p.top_k = static_cast<int>(c.get_int("top_k_sampling", p.top_k));
  p.max_tokens = static_cast<int>(c.get_int("max_tokens", p.max_tokens));
  return p;
}

int wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

void block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

std::unique_ptr<eval::EvalHarness> build_harness(const Globals& g, eval::Dataset ds,
                                                 std::size_t k) {
  eval::HarnessOptions opts;
  opts.fusion = fusion_config(g.config, k);
  auto embedder = make_embedder(g, true);
  auto harness =
      std::make_unique<eval::EvalHarness>(std::move(ds), embedder, kb_config(g.config), opts);
  const auto dir = data_dir(g);
  fs::create_directories(dir);
  embedder->cache()->save(embedding_cache_binary(dir), embedding_cache_manifest(dir));
  return harness;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid sparse/dense retrieval with grounded generation and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value defaults file");
  app.add_option("--seed", g.seed, "seed for every stochastic step")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--data-dir", g.data_dir, "index and cache directory");
  app.add_option("--results-dir", g.results_dir, "output directory for CSVs");
  app.add_option("--env-file", g.env_file, "server-side secrets file");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  auto* ingest = app.add_subcommand("ingest", "chunk and index documents");
  std::vector<std::string> ingest_paths;
  std::string ingest_format;
  ingest->add_option("paths", ingest_paths, "files to ingest")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", ingest_format, "text, csv or json (default: from extension)");

  auto* serve = app.add_subcommand("serve", "run the line-protocol server");
  std::string serve_addr;
  serve->add_option("--addr", serve_addr, "host:port (default HYBRIDRAG_SERVER_ADDR or 127.0.0.1:7878)");

  auto* gateway = app.add_subcommand("gateway", "run the HTTP gateway");
  std::string gw_addr, gw_server, gw_origin;
  gateway->add_option("--addr", gw_addr, "listen host:port");
  gateway->add_option("--server", gw_server, "protocol server host:port");
  gateway->add_option("--cors-origin", gw_origin, "allowed browser origin");

  auto* query = app.add_subcommand("query", "retrieve (and optionally answer) one question");
  std::string question;
  double sparse_w = -1.0;
  std::size_t query_k = 5;
  bool with_answer = false;
  query->add_option("-q,--question", question, "question text")->required();
  query->add_option("--sparse-w", sparse_w, "sparse weight in [0, 1]");
  query->add_option("-k", query_k, "number of hits")->check(CLI::PositiveNumber);
  query->add_flag("--answer", with_answer, "generate a grounded answer");

  std::string ds_path, ds_format;
  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", ds_path, "dataset file")->required()->check(CLI::ExistingFile);
    sub->add_option("--format", ds_format, "squad_json, tsv_triples or jsonl_generic");
  };

  auto* sweep = app.add_subcommand("sweep", "metrics over sparse weights");
  add_dataset(sweep);
  std::vector<double> sweep_weights;
  sweep->add_option("--weights", sweep_weights, "sparse weights (default 0.1 ... 1.0)")
      ->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "sparse / dense / hybrid comparison");
  add_dataset(ablate);
  std::string reference_path;
  ablate->add_option("--reference", reference_path, "reference CSV for the drift note");

  auto* bootstrap = app.add_subcommand("bootstrap", "confidence interval for a per-query column");
  std::string boot_input, boot_metric;
  std::size_t boot_resamples = 1000;
  bootstrap->add_option("--input", boot_input, "per-query CSV")->required()->check(CLI::ExistingFile);
  bootstrap->add_option("--metric", boot_metric, "column name")->required();
  bootstrap->add_option("--resamples", boot_resamples, "bootstrap resamples");

  auto* judge_cmd = app.add_subcommand("judge", "judge answers for a stratified sample");
  add_dataset(judge_cmd);
  double budget = 50.0;
  double cost = 0.01;
  std::size_t judge_n = 500;
  std::string answers_path;
  std::size_t agreement_n = 0;
  judge_cmd->add_option("--budget", budget, "budget in USD");
  judge_cmd->add_option("--cost-per-call", cost, "estimated USD per call");
  judge_cmd->add_option("--n", judge_n, "sample size");
  judge_cmd->add_option("--answers", answers_path, "JSONL of {query_id, answer}; default: generate");
  judge_cmd->add_option("--agreement", agreement_n, "double-code this many samples at T=0 and 0.2");

  auto* sample = app.add_subcommand("sample", "stratified query sample");
  add_dataset(sample);
  std::size_t sample_n = 500;
  sample->add_option("--n", sample_n, "sample size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (!g.config_path.empty()) g.config = Config::load(g.config_path);
    load_env_file(g.env_file);
    const auto seed = effective_seed(g);

    if (*ingest) {
      auto kb = open_kb(g);
      for (const auto& path : ingest_paths) {
        const auto name = fs::path(path).filename().string();
        auto format = ingest_format.empty() ? format_from_filename(name)
                                            : std::optional(parse_document_format(ingest_format));
        if (!format) throw Error(ErrorCode::kUnsupportedFormat, "unsupported format: " + name);
        auto report = kb->ingest_bytes(read_file(path), *format, name);
        std::cout << report.doc_id << "\t" << report.n_chunks << "\t" << name
                  << (report.already_present ? "\talready present" : "") << "\n";
      }
      kb->save(data_dir(g));
      return 0;
    }

    if (*serve) {
      block_signals();
      spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
      std::shared_ptr<KnowledgeBase> kb = open_kb(g);
      ServerConfig sc;
      sc.upload_cap_bytes = static_cast<std::size_t>(g.config.get_int("upload_cap_mb", 100)) << 20;
      sc.initial_weights = FusionWeights::from_sparse(g.config.get_double("sparse_w", 0.3));
      sc.answer.fusion = fusion_config(g.config, kMaxContextPassages);
      sc.answer.generation = generation_params(g.config);
      sc.data_dir = data_dir(g);
      auto handler = std::make_shared<ProtocolHandler>(kb, make_llm(), sc);
      BindAddress addr;
      if (!serve_addr.empty()) {
        addr = parse_bind_address(serve_addr);
      } else if (auto v = env_value("HYBRIDRAG_SERVER_ADDR")) {
        addr = parse_bind_address(*v);
      }
      if (auto p = env_value("HYBRIDRAG_PORT"); p && serve_addr.empty()) {
        addr.port = parse_bind_address(":" + *p).port;
      }
      TcpServer server(handler, addr);
      server.start();
      std::cout << "listening on " << addr.host << ":" << server.port() << std::endl;
      wait_for_signal();
      server.stop();
      return 0;
    }

    if (*gateway) {
      block_signals();
      spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
      auto gc = GatewayConfig::from_env();
      if (!gw_addr.empty()) gc.listen = parse_bind_address(gw_addr);
      if (!gw_server.empty()) gc.upstream = parse_bind_address(gw_server);
      if (!gw_origin.empty()) gc.cors_origin = gw_origin;
      gc.upload_cap_bytes = static_cast<std::size_t>(g.config.get_int("upload_cap_mb", 100)) << 20;
      Gateway gw(gc);
      gw.start();
      std::cout << "gateway on " << gc.listen.host << ":" << gw.port() << std::endl;
      wait_for_signal();
      gw.stop();
      return 0;
    }

    if (*query) {
      auto kb = open_kb(g);
      if (kb->n_chunks() == 0) throw Error(ErrorCode::kEmptyIndex, "empty index");
      const double w = sparse_w >= 0.0 ? sparse_w : g.config.get_double("sparse_w", 0.3);
      const auto weights = FusionWeights::from_sparse(w);
      if (with_answer) {
        auto llm = make_llm();
        ChatSession session("cli");
        AnswerOptions opts;
        opts.fusion = fusion_config(g.config, std::min(query_k, kMaxContextPassages));
        opts.generation = generation_params(g.config);
        auto answer = answer_query(*kb, *llm, session, question, weights, opts);
        std::cout << answer.text << "\n";
        for (const auto& p : answer.context) std::cout << "  [" << p.provenance << "]\n";
        return 0;
      }
      auto hits = kb->retrieve(question, weights, fusion_config(g.config, query_k));
      for (const auto& h : hits) {
        auto chunk = kb->chunk(h.chunk_id);
        std::cout << h.rank << "\t" << format_fixed(h.score) << "\t" << h.chunk_id << "\t"
                  << (chunk ? chunk->provenance : "") << "\n";
      }
      return 0;
    }

    if (*sweep) {
      auto ds = open_dataset(ds_path, ds_format);
      const auto name = ds.name;
      auto harness = build_harness(g, std::move(ds), 10);
      auto weights = sweep_weights.empty() ? eval::default_sweep_weights() : sweep_weights;
      auto rows = eval::weight_sweep(*harness, weights);
      write_result(g, eval::result_filename(name, "sweep", seed), eval::sweep_csv(rows));
      std::vector<std::vector<eval::SweepRow>> all{rows};
      auto best = eval::select_optimal_weight(all);
      std::cout << "optimal sparse weight: " << format_fixed(best.overall, 2) << "\n";
      return 0;
    }

    if (*ablate) {
      auto ds = open_dataset(ds_path, ds_format);
      const auto name = ds.name;
      auto harness = build_harness(g, std::move(ds), 10);
      auto rows = eval::ablation(*harness);
      write_result(g, eval::result_filename(name, "ablation", seed), eval::ablation_csv(rows));
      for (const auto& r : rows) {
        write_result(g, eval::result_filename(name, "ablation-" + r.mode + "-perquery", seed),
                     eval::per_query_csv(r.results));
      }
      fs::path ref = reference_path.empty() ? fs::path("evaluation/reference/retrieval.csv")
                                            : fs::path(reference_path);
      if (fs::exists(ref)) {
        auto notes = eval::discrepancy_notes(name, rows, eval::parse_reference_csv(read_file(ref)));
        write_result(g, eval::result_filename(name, "discrepancy", seed), eval::discrepancy_csv(notes));
        for (const auto& n : notes) {
          if (n.exceeds) {
            std::cout << "note: " << n.method << " " << n.metric << " differs from reference by "
                      << format_fixed(std::abs(n.observed - n.reference), 3)
                      << "; check chunking and embedding model version\n";
          }
        }
        if (notes.empty()) std::cout << "note: no reference rows for dataset " << name << "\n";
      } else if (!reference_path.empty()) {
        throw Error(ErrorCode::kIoError, "reference file not found");
      }
      return 0;
    }

    if (*bootstrap) {
      auto values = eval::csv_column(read_file(boot_input), boot_metric);
      const auto stem = fs::path(boot_input).stem().string();
      auto csv = eval::bootstrap_csv(boot_metric, values, boot_resamples, seed);
      write_result(g, eval::result_filename(stem, "bootstrap-" + boot_metric, seed), csv);
      std::cout << csv;
      return 0;
    }

    if (*sample) {
      auto ds = open_dataset(ds_path, ds_format);
      auto picked = judge::stratify_sample(ds.queries, sample_n, seed);
      std::string csv = "query_id\n";
      for (const auto& q : picked) csv += q.query_id + "\n";
      write_result(g, eval::result_filename(ds.name, "sample-n" + std::to_string(sample_n), seed),
                   csv);
      return 0;
    }

    if (*judge_cmd) {
      auto ds = open_dataset(ds_path, ds_format);
      const auto name = ds.name;
      auto picked = judge::stratify_sample(ds.queries, judge_n, seed);
      auto harness = build_harness(g, std::move(ds), kMaxContextPassages);
      const auto weights = FusionWeights::from_sparse(g.config.get_double("sparse_w", 0.3));

      std::map<std::string, std::string> given;
      if (!answers_path.empty()) {
        for (const auto& line : split(read_file(answers_path), '\n')) {
          if (trim(line).empty()) continue;
          auto rec = json::parse(line);
          given[rec.at("query_id").get<std::string>()] = rec.at("answer").get<std::string>();
        }
      }
      std::shared_ptr<LanguageModel> llm;
      std::vector<judge::JudgeSample> samples;
      for (const auto& q : picked) {
        auto hits = harness->knowledge_base().retrieve(
            q.question, weights, fusion_config(g.config, kMaxContextPassages));
        std::vector<ContextPassage> ctx;
        for (const auto& h : hits) {
          auto c = harness->knowledge_base().chunk(h.chunk_id);
          if (c) ctx.push_back({c->chunk_id, c->provenance, c->text});
        }
        std::string answer;
        if (auto it = given.find(q.query_id); it != given.end()) {
          answer = it->second;
        } else if (!answers_path.empty()) {
          throw Error(ErrorCode::kNotFound, "no answer for query " + q.query_id);
        } else {
          if (!llm) llm = make_llm();
          ChatSession empty("judge");
          answer = llm->complete(build_prompt(empty, ctx, q.question), generation_params(g.config));
        }
        samples.push_back(judge::make_sample(q.query_id, q.question, ctx, answer));
      }

      judge::HttpJudgeClient client(judge::JudgeEndpointConfig::from_env(),
                                    std::make_shared<HttplibTransport>());
      judge::JudgeRunConfig rc;
      rc.budget_usd = budget;
      rc.cost_per_call_usd = cost;
      const auto dir = results_dir(g);
      fs::create_directories(dir);
      rc.checkpoint = dir / eval::result_filename(name, "judge-checkpoint", seed, ".jsonl");
      auto result = judge::run_judging(samples, client, rc);
      std::cout << "status: " << judge::to_string(result.status) << ", verdicts "
                << result.verdicts.size() << ", skipped " << result.skipped.size() << ", calls "
                << result.calls_made << "\n";
      if (!result.verdicts.empty()) {
        auto report = judge::aggregate(result.verdicts, result.skipped.size());
        write_result(g, eval::result_filename(name, "judge", seed),
                     judge::judge_report_csv(name, report, result.verdicts, result.status, seed));
      }
      if (agreement_n > 0) {
        std::span<const judge::JudgeSample> subset(samples.data(),
                                                   std::min(agreement_n, samples.size()));
        auto a = judge::agreement_check(subset, client);
        std::string csv = "n,label_agreement,exact_faithfulness_agreement,within_1_agreement\n" +
                          std::to_string(a.n_compared) + "," + format_fixed(a.label_agreement) +
                          "," + format_fixed(a.exact_faithfulness_agreement) + "," +
                          format_fixed(a.within_1_agreement) + "\n";
        write_result(g, eval::result_filename(name, "judge-agreement", seed), csv);
      }
      return result.status == judge::JudgeRunStatus::kCompleted ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
