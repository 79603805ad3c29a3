#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spencer/data.hpp"
#include "spencer/encoder.hpp"
#include "spencer/tensor.hpp"

namespace spencer {

// Persistent cosine index: contiguous unit vectors for linear scanning,
// aligned with their code ids.
struct VectorIndex {
  size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<double> vectors;  // ids.size() * dim, row-major

  // Build provenance; in-memory only, not part of the file format.
  uint32_t encoder_fingerprint = 0;
  std::string build_time;

  size_t size() const { return ids.size(); }
  std::span<const double> vec(size_t i) const {
    return {vectors.data() + i * dim, dim};
  }
};

enum class Stage { kRecall, kRerank };

struct RankedEntry {
  std::string id;
  double score;
  Stage stage;
};

struct RankedList {
  std::vector<RankedEntry> entries;

  size_t size() const { return entries.size(); }
  const RankedEntry& operator[](size_t i) const { return entries[i]; }
  auto begin() const { return entries.begin(); }
  auto end() const { return entries.end(); }
};

VectorIndex build_index(const Corpus& corpus, const EncoderModel& code_encoder,
                        size_t max_len = 512, size_t threads = 1);

// Top min(k, index size) entries by descending cosine; ties broken by
// ascending id. Heap-based selection.
RankedList recall_topk(const VectorIndex& index, const Tensor& query_vec,
                       size_t k);

// Full descending ordering with the same tie-break; the independent check
// for recall_topk and the first stage of the search pipeline.
RankedList brute_force_search(const VectorIndex& index,
                              const Tensor& query_vec);

// Pluggable scoring and lookup so oracle stand-ins can replace the real
// models in tests.
using PairScorer = std::function<double(
    std::string_view code_id, std::string_view code_text,
    std::string_view query_text)>;
using CorpusAccessor =
    std::function<const std::string&(const std::string& id)>;
using QueryEmbedder = std::function<EmbeddingVector(const std::string& text)>;

PairScorer make_cross_scorer(const EncoderModel& cross_encoder,
                             size_t max_len = 512);
QueryEmbedder make_query_embedder(const EncoderModel& query_encoder,
                                  size_t max_len = 512);
CorpusAccessor make_corpus_accessor(const Corpus& corpus);

// Re-scores the candidates with the pair scorer and stable-sorts descending,
// so equal scores keep their recall order.
RankedList rerank(const std::string& query_text, const RankedList& candidates,
                  const PairScorer& scorer, const CorpusAccessor& corpus);

// Two-stage search: full recall ordering, re-rank the top k, and keep the
// remainder in recall order. Output length equals the index size.
RankedList spencer_search(const std::string& query_text,
                          const VectorIndex& index,
                          const QueryEmbedder& embed_query,
                          const PairScorer& scorer,
                          const CorpusAccessor& corpus, size_t k);

RankedList spencer_search(const std::string& query_text,
                          const VectorIndex& index,
                          const EncoderModel& query_encoder,
                          const EncoderModel& cross_encoder,
                          const CorpusAccessor& corpus, size_t k,
                          size_t max_len = 512);

// Index file: magic "SPIX", version u32, d u32, count u64, entries of
// {id length u32, id bytes, d f64 values}, trailing CRC32.
void save_index(const VectorIndex& index, const std::string& path);
VectorIndex load_index(const std::string& path);

}  // namespace spencer
