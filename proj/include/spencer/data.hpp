#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spencer {

// One positive query/code pair.
struct PairRecord {
  std::string id;
  std::string query;
  std::string code;
};

using Corpus = std::vector<PairRecord>;

// JSONL: one {"id", "query", "code"} object per line. Parse errors cite the
// 1-based line number; duplicate ids are rejected.
Corpus load_jsonl(const std::string& path);
void save_jsonl(const Corpus& corpus, const std::string& path);

struct SplitFractions {
  double train = 0.7;
  double valid = 0.15;
  double test = 0.15;
};

struct SplitResult {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// Seeded shuffle then contiguous cut; the three parts are disjoint and
// exhaustive.
SplitResult split(const Corpus& corpus, const SplitFractions& fractions,
                  uint64_t seed);

// Indices into the corpus; pair i is the only in-batch match for query i,
// every other pairing is a negative.
struct Batch {
  std::vector<size_t> indices;

  size_t size() const { return indices.size(); }
};

// One epoch of seeded batches. A final batch of fewer than 2 records is
// dropped because it carries no negatives.
std::vector<Batch> make_batches(size_t corpus_size, size_t batch_size,
                                uint64_t seed);

struct SyntheticSpec {
  size_t count = 2000;
  size_t vocab = 1000;  // generator token vocabulary, per modality
  size_t code_len_min = 6;
  size_t code_len_max = 12;
  size_t query_len_min = 4;
  size_t query_len_max = 8;
  double noise = 0.2;  // per-token chance of replacing with a distractor
  uint64_t seed = 42;
};

// Paired corpus where each query is a translated sample of its code's
// tokens, optionally corrupted by noise. Code and query vocabularies are
// disjoint so retrieval cannot fall back on string identity.
Corpus synthesize(const SyntheticSpec& spec);

// The fixed translation table used by synthesize().
std::string synthetic_code_token(size_t i);
std::string synthetic_query_token(size_t i);

}  // namespace spencer
