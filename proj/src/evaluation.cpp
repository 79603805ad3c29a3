#include "spencer/evaluation.hpp"

#include <gsl/gsl_sf_gamma.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "spencer/errors.hpp"
#include "spencer/parallel.hpp"
#include "spencer/rng.hpp"

namespace spencer {

size_t frank(const RankedList& ranked, const std::string& truth_id) {
  for (size_t i = 0; i < ranked.size(); ++i)
    if (ranked[i].id == truth_id) return i + 1;
  throw DataError("frank: truth id \"" + truth_id +
                  "\" is not in the ranked list");
}

double recall_at_k(std::span<const size_t> ranks, size_t k) {
  if (k < 1) throw ParameterError("recall_at_k: k must be >= 1");
  if (ranks.empty()) throw ParameterError("recall_at_k: no ranks");
  size_t hits = 0;
  for (size_t r : ranks)
    if (r <= k) ++hits;
  return double(hits) / double(ranks.size());
}

double mrr(std::span<const size_t> ranks) {
  if (ranks.empty()) throw ParameterError("mrr: no ranks");
  double acc = 0.0;
  for (size_t r : ranks) acc += 1.0 / double(r);
  return acc / double(ranks.size());
}

EvalReport pooled_eval(const Corpus& pairs, const PoolSearcher& searcher,
                       const EvalConfig& cfg) {
  if (cfg.pool_size < 2)
    throw ParameterError("pooled_eval: pool size must be >= 2");
  if (pairs.size() < 2)
    throw ParameterError("pooled_eval: need at least 2 pairs");
  for (size_t k : cfg.ks)
    if (k < 1) throw ParameterError("pooled_eval: k values must be >= 1");

  const std::vector<size_t> order = shuffled_range(pairs.size(), cfg.seed);
  std::vector<std::vector<const PairRecord*>> pools;
  for (size_t start = 0; start < order.size(); start += cfg.pool_size) {
    const size_t end = std::min(start + cfg.pool_size, order.size());
    if (end - start < 2) break;  // a singleton pool cannot rank anything
    std::vector<const PairRecord*> pool;
    pool.reserve(end - start);
    for (size_t i = start; i < end; ++i) pool.push_back(&pairs[order[i]]);
    pools.push_back(std::move(pool));
  }

  EvalReport report;
  report.pools.resize(pools.size());
  parallel_for(pools.size(), cfg.threads, [&](size_t pi) {
    const auto& pool = pools[pi];
    std::vector<size_t> ranks;
    ranks.reserve(pool.size());
    for (const PairRecord* query : pool) {
      const RankedList ranked = searcher(*query, pool);
      ranks.push_back(frank(ranked, query->id));
    }
    PoolResult res;
    res.n = pool.size();
    res.partial = pool.size() < cfg.pool_size;
    res.mrr = mrr(ranks);
    for (size_t k : cfg.ks) res.recall_at[k] = recall_at_k(ranks, k);
    report.pools[pi] = std::move(res);
  });

  for (const PoolResult& p : report.pools) {
    report.mrr += p.mrr;
    for (const auto& [k, v] : p.recall_at) report.recall_at[k] += v;
  }
  const double np = double(report.pools.size());
  report.mrr /= np;
  for (auto& [k, v] : report.recall_at) v /= np;
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["aggregate"]["mrr"] = mrr;
  for (const auto& [k, v] : recall_at)
    j["aggregate"]["recall_at"][std::to_string(k)] = v;
  j["pools"] = nlohmann::json::array();
  for (const PoolResult& p : pools) {
    nlohmann::json jp;
    jp["n"] = p.n;
    jp["partial"] = p.partial;
    jp["mrr"] = p.mrr;
    for (const auto& [k, v] : p.recall_at)
      jp["recall_at"][std::to_string(k)] = v;
    j["pools"].push_back(std::move(jp));
  }
  for (const auto& [stage, stat] : timing) {
    j["timing"][stage]["mean_ms"] = stat.mean_ms;
    j["timing"][stage]["std_ms"] = stat.std_ms;
  }
  if (!config_echo.empty())
    j["config"] = nlohmann::json::parse(config_echo);
  return j.dump(2);
}

std::string EvalReport::render_table() const {
  std::ostringstream out;
  out << "pool    n";
  for (const auto& [k, _] : recall_at) out << "     R@" << k;
  out << "     MRR\n";
  char buf[32];
  for (size_t i = 0; i < pools.size(); ++i) {
    const PoolResult& p = pools[i];
    std::snprintf(buf, sizeof(buf), "%-6zu %4zu", i, p.n);
    out << buf;
    for (const auto& [k, v] : p.recall_at) {
      std::snprintf(buf, sizeof(buf), "  %6.3f", v);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "  %6.3f", p.mrr);
    out << buf << (p.partial ? "  (partial)" : "") << "\n";
  }
  out << "mean   " << std::string(4, ' ');
  for (const auto& [k, v] : recall_at) {
    std::snprintf(buf, sizeof(buf), "  %6.3f", v);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "  %6.3f", mrr);
  out << buf << "\n";
  return out.str();
}

PoolVectorSource encode_vector_source(const EncoderModel& code_encoder,
                                      size_t max_len) {
  if (code_encoder.has_score_head())
    throw ContractError("vector source: expected a dual code encoder");
  const Vocabulary vocab = code_encoder.vocabulary();
  const size_t dim = code_encoder.dim;
  return [&code_encoder, vocab, max_len, dim](const PairRecord& rec,
                                              double* out_row) {
    const EmbeddingVector v =
        encode(code_encoder, tokenize(rec.code, vocab, max_len));
    std::copy(v.values().data(), v.values().data() + dim, out_row);
  };
}

PoolVectorSource index_vector_source(const VectorIndex& index) {
  auto lookup = std::make_shared<std::unordered_map<std::string, size_t>>();
  for (size_t i = 0; i < index.size(); ++i) lookup->emplace(index.ids[i], i);
  return [&index, lookup](const PairRecord& rec, double* out_row) {
    const auto it = lookup->find(rec.id);
    if (it == lookup->end())
      throw DataError("pool searcher: id \"" + rec.id +
                      "\" is not in the index");
    const auto row = index.vec(it->second);
    std::copy(row.begin(), row.end(), out_row);
  };
}

PoolSearcher make_pool_searcher(size_t dim, PoolVectorSource source,
                                QueryEmbedder embed_query, PairScorer scorer,
                                size_t rerank_k) {
  struct Cache {
    std::mutex mu;
    std::unordered_map<const void*, std::shared_ptr<VectorIndex>> pools;
  };
  auto cache = std::make_shared<Cache>();
  return [dim, source = std::move(source), embed_query = std::move(embed_query),
          scorer = std::move(scorer), rerank_k,
          cache](const PairRecord& query,
                 const std::vector<const PairRecord*>& pool) -> RankedList {
    std::shared_ptr<VectorIndex> index;
    {
      std::lock_guard<std::mutex> lock(cache->mu);
      auto& slot = cache->pools[pool.data()];
      if (!slot) {
        slot = std::make_shared<VectorIndex>();
        slot->dim = dim;
        slot->ids.resize(pool.size());
        slot->vectors.resize(pool.size() * dim);
        for (size_t i = 0; i < pool.size(); ++i) {
          slot->ids[i] = pool[i]->id;
          source(*pool[i], slot->vectors.data() + i * dim);
        }
      }
      index = slot;
    }
    const EmbeddingVector qvec = embed_query(query.query);
    if (!scorer) return brute_force_search(*index, qvec.values());
    auto pool_codes = [&pool](const std::string& id) -> const std::string& {
      for (const PairRecord* rec : pool)
        if (rec->id == id) return rec->code;
      throw DataError("pool searcher: id \"" + id + "\" left the pool");
    };
    return spencer_search(
        query.query, *index, [&](const std::string&) { return qvec; },
        scorer, pool_codes, rerank_k);
  };
}

PoolSearcher make_dual_pool_searcher(const EncoderModel& query_encoder,
                                     const EncoderModel& code_encoder,
                                     size_t max_len) {
  return make_pool_searcher(code_encoder.dim,
                            encode_vector_source(code_encoder, max_len),
                            make_query_embedder(query_encoder, max_len));
}

PoolSearcher make_two_stage_pool_searcher(const EncoderModel& query_encoder,
                                          const EncoderModel& code_encoder,
                                          const EncoderModel& cross_encoder,
                                          size_t rerank_k, size_t max_len) {
  return make_pool_searcher(code_encoder.dim,
                            encode_vector_source(code_encoder, max_len),
                            make_query_embedder(query_encoder, max_len),
                            make_cross_scorer(cross_encoder, max_len),
                            rerank_k);
}

TimingReport timing_benchmark(
    const std::vector<std::pair<std::string, StageFn>>& stages,
    size_t repeats) {
  if (repeats < 3)
    throw ParameterError("timing_benchmark: repeats must be >= 3");
  using Clock = std::chrono::steady_clock;
  TimingReport report;
  for (const auto& [name, fn] : stages) {
    fn();  // warm-up
    std::vector<double> samples;
    samples.reserve(repeats);
    for (size_t r = 0; r < repeats; ++r) {
      const auto t0 = Clock::now();
      fn();
      const auto t1 = Clock::now();
      samples.push_back(
          std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= double(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var = samples.size() > 1 ? var / double(samples.size() - 1) : 0.0;
    report.stages[name] = {mean, std::sqrt(var)};
  }
  const auto orig = report.stages.find(kStageQueryEncodeOriginal);
  const auto dist = report.stages.find(kStageQueryEncodeDistilled);
  if (orig != report.stages.end() && dist != report.stages.end())
    report.reduction_pct =
        time_reduction_pct(orig->second.mean_ms, dist->second.mean_ms);
  return report;
}

double time_reduction_pct(double t_original_ms, double t_new_ms) {
  if (t_original_ms <= 0.0)
    throw ParameterError("time_reduction_pct: baseline must be positive");
  return 100.0 * (t_original_ms - t_new_ms) / t_original_ms;
}

TTestResult paired_t_test(std::span<const double> a,
                          std::span<const double> b) {
  if (a.size() != b.size())
    throw ParameterError("paired_t_test: samples differ in length");
  const size_t n = a.size();
  if (n < 2) throw ParameterError("paired_t_test: need at least 2 pairs");

  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= double(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    var += d * d;
  }
  var /= double(n - 1);

  if (var == 0.0) {
    // All differences identical: no spread to test against.
    if (mean == 0.0) return {0.0, 1.0, true};
    return {mean > 0.0 ? HUGE_VAL : -HUGE_VAL, 0.0, true};
  }

  const double t = mean / std::sqrt(var / double(n));
  const double nu = double(n - 1);
  const double p = gsl_sf_beta_inc(nu / 2.0, 0.5, nu / (nu + t * t));
  return {t, p, false};
}

}  // namespace spencer
