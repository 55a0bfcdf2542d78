#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hybridrag/dense_index.hpp"
#include "hybridrag/error.hpp"
#include "hybridrag/eval/metrics.hpp"
#include "hybridrag/eval/stats.hpp"
#include "hybridrag/fusion.hpp"
#include "hybridrag/ingest.hpp"
#include "hybridrag/judge.hpp"
#include "hybridrag/knowledge_base.hpp"
#include "hybridrag/protocol.hpp"
#include "hybridrag/sparse_index.hpp"

namespace py = pybind11;
using namespace hybridrag;

namespace {

class CallbackModel final : public LanguageModel {
 public:
  explicit CallbackModel(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt, const GenerationParams&) override {
    py::gil_scoped_acquire gil;
    return fn_(prompt);
  }

 private:
  std::function<std::string(const std::string&)> fn_;
};

std::shared_ptr<CachedEmbedder> hash_embedder(std::size_t dim) {
  return std::make_shared<CachedEmbedder>(std::make_shared<HashEmbeddingProvider>(dim),
                                          std::make_shared<EmbeddingCache>());
}

KnowledgeBaseConfig kb_config(std::size_t chunk_size, std::size_t overlap) {
  KnowledgeBaseConfig c;
  c.chunking.chunk_size = chunk_size;
  c.chunking.overlap = overlap;
  return c;
}

py::dict record_dict(const DocumentRecord& r) {
  py::dict d;
  d["doc_id"] = r.doc_id;
  d["filename"] = r.filename;
  d["format"] = std::string(to_string(r.format));
  d["byte_length"] = r.byte_length;
  d["ingested_at"] = r.ingested_at;
  return d;
}

py::dict chunk_dict(const Chunk& c) {
  py::dict d;
  d["chunk_id"] = c.chunk_id;
  d["doc_id"] = c.doc_id;
  d["text"] = c.text;
  d["token_count"] = c.token_count;
  d["provenance"] = c.provenance;
  return d;
}

std::vector<RetrievedHit> as_hits(const std::vector<std::string>& ids, HitSource source) {
  std::vector<RetrievedHit> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back({ids[i], 1.0 / static_cast<double>(i + 1), i + 1, source});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hybridrag core";

  static py::exception<Error> error_type(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<RetrievedHit>(m, "RetrievedHit")
      .def_readonly("chunk_id", &RetrievedHit::chunk_id)
      .def_readonly("score", &RetrievedHit::score)
      .def_readonly("rank", &RetrievedHit::rank)
      .def_property_readonly("source",
                             [](const RetrievedHit& h) { return std::string(to_string(h.source)); })
      .def("__repr__", [](const RetrievedHit& h) {
        return "RetrievedHit(" + h.chunk_id + ", rank=" + std::to_string(h.rank) + ")";
      });

  m.def("tokenize", &tokenize, py::arg("text"));
  m.def(
      "hash_embed", [](const std::string& text, std::size_t dim) { return hash_embed(text, dim).values; },
      py::arg("text"), py::arg("dim") = 256);
  m.def(
      "chunk_text",
      [](const std::string& text, std::size_t chunk_size, std::size_t overlap,
         const std::string& doc_id) {
        ChunkConfig c;
        c.chunk_size = chunk_size;
        c.overlap = overlap;
        py::list out;
        for (const auto& ch : chunk_text(text, c, doc_id)) out.append(chunk_dict(ch));
        return out;
      },
      py::arg("text"), py::arg("chunk_size") = 350, py::arg("overlap") = 40,
      py::arg("doc_id") = "doc");

  py::class_<SparseIndex>(m, "SparseIndex")
      .def(py::init([](double k1, double b) { return SparseIndex(Bm25Params{k1, b}); }),
           py::arg("k1") = 1.2, py::arg("b") = 0.75)
      .def(
          "add",
          [](SparseIndex& idx, const std::vector<std::pair<std::string, std::string>>& items) {
            std::vector<Chunk> chunks;
            for (const auto& [id, text] : items) {
              Chunk c;
              c.chunk_id = id;
              c.text = text;
              chunks.push_back(std::move(c));
            }
            idx.add_chunks(chunks);
          },
          py::arg("items"))
      .def("search", &SparseIndex::search, py::arg("query"), py::arg("k"))
      .def("idf", &SparseIndex::idf, py::arg("term"))
      .def_property_readonly("n_docs", &SparseIndex::n_docs);

  py::class_<VectorStore>(m, "VectorStore")
      .def(py::init<std::size_t>(), py::arg("dim"))
      .def(
          "add",
          [](VectorStore& s, const std::string& id, std::vector<float> v) {
            s.add(id, EmbeddingVector{std::move(v)});
          },
          py::arg("chunk_id"), py::arg("vector"))
      .def(
          "search",
          [](const VectorStore& s, std::vector<float> q, std::size_t k) {
            return s.search(EmbeddingVector{std::move(q)}, k);
          },
          py::arg("query"), py::arg("k"))
      .def("__len__", &VectorStore::size);

  m.def(
      "fuse",
      [](const std::vector<std::string>& sparse_ids, const std::vector<std::string>& dense_ids,
         double sparse_w, std::size_t k, const std::string& mode, int rrf_k) {
        FusionConfig c{parse_fusion_mode(mode), rrf_k, k};
        return fuse(as_hits(sparse_ids, HitSource::kSparse), as_hits(dense_ids, HitSource::kDense),
                    FusionWeights::from_sparse(sparse_w), c);
      },
      py::arg("sparse_ids"), py::arg("dense_ids"), py::arg("sparse_w") = 0.3, py::arg("k") = 10,
      py::arg("mode") = "weighted_rrf", py::arg("rrf_k") = 60,
      "Fuse two ranked id lists. Scores of the inputs are taken as 1/rank.");

  py::class_<KnowledgeBase, std::shared_ptr<KnowledgeBase>>(m, "KnowledgeBase")
      .def(py::init([](std::size_t dim, std::size_t chunk_size, std::size_t overlap) {
             return std::make_shared<KnowledgeBase>(hash_embedder(dim), kb_config(chunk_size, overlap));
           }),
           py::arg("dim") = 256, py::arg("chunk_size") = 350, py::arg("overlap") = 40,
           "In-process knowledge base with the deterministic hash embedder.")
      .def_static(
          "load",
          [](const std::filesystem::path& dir, std::size_t dim, std::size_t chunk_size,
             std::size_t overlap) {
            return std::shared_ptr<KnowledgeBase>(
                KnowledgeBase::load(dir, hash_embedder(dim), kb_config(chunk_size, overlap)));
          },
          py::arg("dir"), py::arg("dim") = 256, py::arg("chunk_size") = 350, py::arg("overlap") = 40)
      .def(
          "ingest",
          [](KnowledgeBase& kb, const py::bytes& data, const std::string& format,
             const std::string& filename) {
            auto r = kb.ingest_bytes(std::string(data), parse_document_format(format), filename);
            py::dict d;
            d["doc_id"] = r.doc_id;
            d["n_chunks"] = r.n_chunks;
            d["already_present"] = r.already_present;
            return d;
          },
          py::arg("data"), py::arg("format") = "text", py::arg("filename") = "")
      .def("delete", &KnowledgeBase::delete_document, py::arg("doc_id"))
      .def("documents",
           [](const KnowledgeBase& kb) {
             py::list out;
             for (const auto& r : kb.list_documents()) out.append(record_dict(r));
             return out;
           })
      .def(
          "chunk",
          [](const KnowledgeBase& kb, const std::string& id) -> py::object {
            auto c = kb.chunk(id);
            if (!c) return py::none();
            return chunk_dict(*c);
          },
          py::arg("chunk_id"))
      .def(
          "retrieve",
          [](const KnowledgeBase& kb, const std::string& q, double sparse_w, std::size_t k,
             const std::string& mode) {
            FusionConfig c{parse_fusion_mode(mode), 60, k};
            return kb.retrieve(q, FusionWeights::from_sparse(sparse_w), c);
          },
          py::arg("query"), py::arg("sparse_w") = 0.3, py::arg("k") = 10,
          py::arg("mode") = "weighted_rrf")
      .def("save", &KnowledgeBase::save, py::arg("dir"))
      .def_property_readonly("n_chunks", &KnowledgeBase::n_chunks)
      .def_property_readonly("n_documents", &KnowledgeBase::n_documents);

  py::class_<ProtocolHandler, std::shared_ptr<ProtocolHandler>>(m, "ProtocolHandler")
      .def(py::init([](std::shared_ptr<KnowledgeBase> kb,
                       std::function<std::string(const std::string&)> model) {
             return std::make_shared<ProtocolHandler>(std::move(kb),
                                                      std::make_shared<CallbackModel>(std::move(model)));
           }),
           py::arg("kb"), py::arg("model"),
           "Protocol dispatcher; model is called with the prompt and returns the answer text.")
      .def(
          "handle",
          [](ProtocolHandler& h, const std::string& line) { return h.handle_line(line); },
          py::arg("line"));

  py::class_<eval::MetricReport>(m, "MetricReport")
      .def_readonly("recall_at", &eval::MetricReport::recall_at)
      .def_readonly("mrr", &eval::MetricReport::mrr)
      .def_readonly("mean_rank", &eval::MetricReport::mean_rank)
      .def_readonly("median_rank", &eval::MetricReport::median_rank)
      .def_readonly("rank1_count", &eval::MetricReport::rank1_count)
      .def_readonly("em", &eval::MetricReport::em)
      .def_readonly("answer_coverage", &eval::MetricReport::answer_coverage)
      .def_readonly("n_queries", &eval::MetricReport::n_queries);

  m.def(
      "compute_metrics",
      [](const std::vector<std::optional<std::size_t>>& ranks) {
        std::vector<eval::QueryResult> rs;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
          eval::QueryResult r;
          r.query_id = "q" + std::to_string(i);
          r.first_relevant_rank = ranks[i];
          rs.push_back(std::move(r));
        }
        return eval::compute_metrics(rs);
      },
      py::arg("first_relevant_ranks"), "Metrics from 1-based first-relevant ranks (None = miss).");
  m.def("normalize_answer", &eval::normalize_answer, py::arg("text"));

  py::class_<eval::ConfidenceInterval>(m, "ConfidenceInterval")
      .def_readonly("point", &eval::ConfidenceInterval::point)
      .def_readonly("lo", &eval::ConfidenceInterval::lo)
      .def_readonly("hi", &eval::ConfidenceInterval::hi)
      .def_readonly("n_resamples", &eval::ConfidenceInterval::n_resamples)
      .def_property_readonly("method", [](const eval::ConfidenceInterval& c) {
        return std::string(to_string(c.method));
      });
  m.def(
      "bootstrap_ci",
      [](const std::vector<double>& v, std::size_t n, std::uint64_t seed) {
        return eval::bootstrap_ci(v, n, seed);
      },
      py::arg("values"), py::arg("n_resamples") = 1000, py::arg("seed") = 0);
  m.def("wilson_interval", &eval::wilson_interval, py::arg("successes"), py::arg("n"),
        py::arg("z") = 1.96);

  py::class_<judge::JudgeVerdict>(m, "JudgeVerdict")
      .def_readonly("hallucination", &judge::JudgeVerdict::hallucination)
      .def_readonly("faithfulness", &judge::JudgeVerdict::faithfulness)
      .def_readonly("confidence", &judge::JudgeVerdict::confidence)
      .def_readonly("unsupported_claims", &judge::JudgeVerdict::unsupported_claims);
  m.def("parse_verdict", &judge::parse_verdict, py::arg("raw_text"));
  m.def(
      "build_judge_prompt",
      [](const std::string& question, const std::string& context, const std::string& answer) {
        return judge::build_judge_prompt({"", question, context, answer});
      },
      py::arg("question"), py::arg("context"), py::arg("answer"));
  m.def("tertile_quotas", &judge::tertile_quotas, py::arg("n"));
}
