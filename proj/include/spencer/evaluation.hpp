#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spencer/data.hpp"
#include "spencer/retrieval.hpp"

namespace spencer {

struct EvalConfig {
  size_t pool_size = 1000;
  std::vector<size_t> ks = {1, 3, 5, 10};
  size_t timing_repeats = 5;
  uint64_t seed = 42;
  size_t threads = 1;
};

// 1-based rank of the ground truth in a ranked list.
size_t frank(const RankedList& ranked, const std::string& truth_id);

// Fraction of ranks within the top k.
double recall_at_k(std::span<const size_t> ranks, size_t k);

// Mean reciprocal rank.
double mrr(std::span<const size_t> ranks);

struct PoolResult {
  std::map<size_t, double> recall_at;
  double mrr = 0.0;
  size_t n = 0;
  bool partial = false;
};

struct TimingStat {
  double mean_ms = 0.0;
  double std_ms = 0.0;
};

struct EvalReport {
  std::vector<PoolResult> pools;
  std::map<size_t, double> recall_at;  // unweighted mean over pools
  double mrr = 0.0;
  std::map<std::string, TimingStat> timing;
  std::string config_echo;  // serialized configuration, for provenance

  std::string to_json() const;
  std::string render_table() const;
};

// Ranks one query against its pool's code entries.
using PoolSearcher = std::function<RankedList(
    const PairRecord& query, const std::vector<const PairRecord*>& pool)>;

// Seeded shuffle, consecutive pools of pool_size; a final partial pool is
// kept when it still has at least 2 members, and flagged. Each query is
// searched only within its own pool.
EvalReport pooled_eval(const Corpus& pairs, const PoolSearcher& searcher,
                       const EvalConfig& cfg);

// Writes the code vector for one record into out_row (dim doubles).
using PoolVectorSource =
    std::function<void(const PairRecord& rec, double* out_row)>;

PoolVectorSource encode_vector_source(const EncoderModel& code_encoder,
                                      size_t max_len = 512);
// Looks vectors up in a prebuilt index by record id.
PoolVectorSource index_vector_source(const VectorIndex& index);

// Generic pool searcher: builds (and caches) a per-pool mini index from the
// vector source, ranks with the query embedder, and optionally re-ranks the
// top rerank_k with the pair scorer. Create a fresh searcher per
// pooled_eval call; the cache keys on pool identity.
PoolSearcher make_pool_searcher(size_t dim, PoolVectorSource source,
                                QueryEmbedder embed_query,
                                PairScorer scorer = nullptr,
                                size_t rerank_k = 0);

// Recall-only ranking with the dual encoders.
PoolSearcher make_dual_pool_searcher(const EncoderModel& query_encoder,
                                     const EncoderModel& code_encoder,
                                     size_t max_len = 512);

// Full two-stage ranking.
PoolSearcher make_two_stage_pool_searcher(const EncoderModel& query_encoder,
                                          const EncoderModel& code_encoder,
                                          const EncoderModel& cross_encoder,
                                          size_t rerank_k,
                                          size_t max_len = 512);

// Stage name constants recognized by the reduction computation.
inline constexpr const char* kStageQueryEncodeOriginal =
    "query_encode_original";
inline constexpr const char* kStageQueryEncodeDistilled =
    "query_encode_distilled";

struct TimingReport {
  std::map<std::string, TimingStat> stages;
  // Present when both query-encode stages were measured.
  std::optional<double> reduction_pct;
};

using StageFn = std::function<void()>;

// One warm-up round, then `repeats` timed rounds per stage on the monotonic
// clock. repeats must be >= 3.
TimingReport timing_benchmark(
    const std::vector<std::pair<std::string, StageFn>>& stages,
    size_t repeats);

double time_reduction_pct(double t_original_ms, double t_new_ms);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero-variance differences
};

// Paired-difference t statistic with a two-sided p-value. Identical samples
// report p = 1; zero-variance nonzero-mean differences report p = 0. Both
// carry the degenerate flag.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace spencer
