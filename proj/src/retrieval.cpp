#include "spencer/retrieval.hpp"

#include <zlib.h>

#include <algorithm>
#include <ctime>
#include <memory>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "serial.hpp"
#include "spencer/checkpoint.hpp"
#include "spencer/errors.hpp"
#include "spencer/parallel.hpp"

namespace spencer {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'I', 'X'};
constexpr uint32_t kVersion = 1;

double index_cosine(const VectorIndex& index, size_t i,
                    const Tensor& query_vec) {
  const double* q = query_vec.data();
  const double* v = index.vectors.data() + i * index.dim;
  double acc = 0.0;
  for (size_t j = 0; j < index.dim; ++j) acc += q[j] * v[j];
  return acc;
}

// Total order: better score first, then ascending id.
bool ranks_before(double score_a, const std::string& id_a, double score_b,
                  const std::string& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

std::string now_string() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

VectorIndex build_index(const Corpus& corpus, const EncoderModel& code_encoder,
                        size_t max_len, size_t threads) {
  if (code_encoder.has_score_head())
    throw ContractError("build_index: expected a dual code encoder");
  std::unordered_set<std::string> seen;
  for (const PairRecord& rec : corpus)
    if (!seen.insert(rec.id).second)
      throw DataError("build_index: duplicate id \"" + rec.id + "\"");

  VectorIndex index;
  index.dim = code_encoder.dim;
  index.ids.resize(corpus.size());
  index.vectors.resize(corpus.size() * code_encoder.dim);
  const Vocabulary vocab = code_encoder.vocabulary();
  parallel_for(corpus.size(), threads, [&](size_t i) {
    index.ids[i] = corpus[i].id;
    const TokenSequence seq = tokenize(corpus[i].code, vocab, max_len);
    const EmbeddingVector v = encode(code_encoder, seq);
    std::copy(v.values().data(), v.values().data() + index.dim,
              index.vectors.data() + i * index.dim);
  });
  index.encoder_fingerprint = model_fingerprint(code_encoder);
  index.build_time = now_string();
  return index;
}

RankedList recall_topk(const VectorIndex& index, const Tensor& query_vec,
                       size_t k) {
  if (k < 1) throw ParameterError("recall_topk: k must be >= 1");
  if (query_vec.numel() != index.dim)
    throw DimensionError("recall_topk: query dimension " +
                         shape_str(query_vec) + " does not match index dim " +
                         std::to_string(index.dim));
  const size_t keep = std::min(k, index.size());

  // Heap whose top is the worst of the kept set, so each scan step is
  // O(log k).
  std::vector<double> scores(index.size());
  auto better = [&](size_t a, size_t b) {
    return ranks_before(scores[a], index.ids[a], scores[b], index.ids[b]);
  };
  std::priority_queue<size_t, std::vector<size_t>, decltype(better)> heap(
      better);
  for (size_t i = 0; i < index.size(); ++i) {
    scores[i] = index_cosine(index, i, query_vec);
    if (heap.size() < keep) {
      heap.push(i);
    } else if (!heap.empty() &&
               ranks_before(scores[i], index.ids[i], scores[heap.top()],
                            index.ids[heap.top()])) {
      heap.pop();
      heap.push(i);
    }
  }
  std::vector<size_t> kept;
  kept.reserve(heap.size());
  while (!heap.empty()) {
    kept.push_back(heap.top());
    heap.pop();
  }
  std::reverse(kept.begin(), kept.end());

  RankedList out;
  out.entries.reserve(kept.size());
  for (size_t i : kept)
    out.entries.push_back({index.ids[i], scores[i], Stage::kRecall});
  return out;
}

RankedList brute_force_search(const VectorIndex& index,
                              const Tensor& query_vec) {
  if (query_vec.numel() != index.dim)
    throw DimensionError("brute_force_search: query dimension " +
                         shape_str(query_vec) + " does not match index dim " +
                         std::to_string(index.dim));
  std::vector<std::pair<double, size_t>> scored(index.size());
  for (size_t i = 0; i < index.size(); ++i)
    scored[i] = {index_cosine(index, i, query_vec), i};
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    return ranks_before(a.first, index.ids[a.second], b.first,
                        index.ids[b.second]);
  });
  RankedList out;
  out.entries.reserve(scored.size());
  for (const auto& [score, i] : scored)
    out.entries.push_back({index.ids[i], score, Stage::kRecall});
  return out;
}

PairScorer make_cross_scorer(const EncoderModel& cross_encoder,
                             size_t max_len) {
  if (!cross_encoder.has_score_head())
    throw ContractError("make_cross_scorer: model has no score head");
  const Vocabulary vocab = cross_encoder.vocabulary();
  return [&cross_encoder, vocab, max_len](std::string_view, std::string_view code,
                                          std::string_view query) {
    const TokenSequence code_seq = tokenize(code, vocab, max_len);
    const TokenSequence query_seq = tokenize(query, vocab, max_len);
    return score_pair(cross_encoder, code_seq, query_seq, EncodeCtx::infer(),
                      max_len);
  };
}

QueryEmbedder make_query_embedder(const EncoderModel& query_encoder,
                                  size_t max_len) {
  if (query_encoder.has_score_head())
    throw ContractError("make_query_embedder: expected a dual query encoder");
  const Vocabulary vocab = query_encoder.vocabulary();
  return [&query_encoder, vocab, max_len](const std::string& text) {
    return encode(query_encoder, tokenize(text, vocab, max_len));
  };
}

CorpusAccessor make_corpus_accessor(const Corpus& corpus) {
  auto table = std::make_shared<
      std::unordered_map<std::string, const std::string*>>();
  for (const PairRecord& rec : corpus) table->emplace(rec.id, &rec.code);
  return [table](const std::string& id) -> const std::string& {
    const auto it = table->find(id);
    if (it == table->end())
      throw DataError("corpus accessor: unknown id \"" + id + "\"");
    return *it->second;
  };
}

RankedList rerank(const std::string& query_text, const RankedList& candidates,
                  const PairScorer& scorer, const CorpusAccessor& corpus) {
  RankedList out;
  out.entries.reserve(candidates.size());
  for (const RankedEntry& e : candidates) {
    const std::string& code = corpus(e.id);
    out.entries.push_back(
        {e.id, scorer(e.id, code, query_text), Stage::kRerank});
  }
  // Stable: equal scores keep the incoming recall order.
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) {
                     return a.score > b.score;
                   });
  return out;
}

RankedList spencer_search(const std::string& query_text,
                          const VectorIndex& index,
                          const QueryEmbedder& embed_query,
                          const PairScorer& scorer,
                          const CorpusAccessor& corpus, size_t k) {
  if (k < 1) throw ParameterError("search: recall k must be >= 1");
  const EmbeddingVector qvec = embed_query(query_text);
  RankedList recall = brute_force_search(index, qvec.values());
  const size_t cut = std::min(k, recall.size());

  RankedList head;
  head.entries.assign(recall.entries.begin(),
                      recall.entries.begin() + long(cut));
  RankedList reranked = rerank(query_text, head, scorer, corpus);

  RankedList out;
  out.entries.reserve(recall.size());
  out.entries = std::move(reranked.entries);
  out.entries.insert(out.entries.end(), recall.entries.begin() + long(cut),
                     recall.entries.end());
  return out;
}

RankedList spencer_search(const std::string& query_text,
                          const VectorIndex& index,
                          const EncoderModel& query_encoder,
                          const EncoderModel& cross_encoder,
                          const CorpusAccessor& corpus, size_t k,
                          size_t max_len) {
  return spencer_search(query_text, index,
                        make_query_embedder(query_encoder, max_len),
                        make_cross_scorer(cross_encoder, max_len), corpus, k);
}

void save_index(const VectorIndex& index, const std::string& path) {
  serial::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(index.dim));
  w.u64(index.size());
  for (size_t i = 0; i < index.size(); ++i) {
    w.u32(static_cast<uint32_t>(index.ids[i].size()));
    w.bytes(index.ids[i].data(), index.ids[i].size());
    for (size_t j = 0; j < index.dim; ++j)
      w.f64(index.vectors[i * index.dim + j]);
  }
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(w.data().data()),
              static_cast<uInt>(w.data().size())));
  w.u32(crc);
  serial::write_file(path, w.data(), "index");
}

VectorIndex load_index(const std::string& path) {
  const std::vector<uint8_t> bytes = serial::read_file(path, "index");
  if (bytes.size() < 4 + 4 + 4)
    throw TruncatedError("index: " + path + " is too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("index: " + path + " has wrong magic bytes");
  serial::Reader r(bytes.data() + 4, bytes.size() - 4, "index");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError("index: format version " + std::to_string(version) +
                       ", expected " + std::to_string(kVersion));
  VectorIndex index;
  index.dim = r.u32();
  const uint64_t count = r.u64();
  index.ids.reserve(count);
  index.vectors.reserve(count * index.dim);
  std::unordered_set<std::string> seen;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t id_len = r.u32();
    std::string id = r.str(id_len);
    if (id.empty() || !seen.insert(id).second)
      throw DataError("index: empty or duplicate id at entry " +
                      std::to_string(i));
    index.ids.push_back(std::move(id));
    for (size_t j = 0; j < index.dim; ++j)
      index.vectors.push_back(r.f64());
  }
  if (r.remaining() < 4)
    throw TruncatedError("index: " + path + " is missing its checksum");
  const size_t payload = 4 + r.pos();
  const uint32_t stored = r.u32();
  if (r.remaining() != 0)
    throw FormatError("index: " + path + " has trailing bytes");
  const uint32_t actual = static_cast<uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(bytes.data()),
      static_cast<uInt>(payload)));
  if (stored != actual)
    throw ChecksumError("index: " + path + " checksum mismatch");
  return index;
}

}  // namespace spencer
