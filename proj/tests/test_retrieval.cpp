#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "spencer/encoder.hpp"
#include "spencer/errors.hpp"
#include "spencer/retrieval.hpp"
#include "support/grad_check.hpp"

using namespace spencer;
using spencer::testing::random_unit;

namespace {

EncoderModel tiny_encoder(uint64_t seed) {
  EncoderConfig cfg;
  cfg.vocab_buckets = 64;
  cfg.dim = 8;
  cfg.hidden = 16;
  cfg.layers = 2;
  cfg.seed = seed;
  return make_encoder(cfg);
}

Corpus tiny_corpus(size_t n, uint64_t seed) {
  SyntheticSpec spec;
  spec.count = n;
  spec.vocab = 40;
  spec.code_len_min = 3;
  spec.code_len_max = 6;
  spec.query_len_min = 2;
  spec.query_len_max = 4;
  spec.seed = seed;
  return synthesize(spec);
}

VectorIndex random_index(size_t count, size_t dim, uint64_t seed) {
  VectorIndex index;
  index.dim = dim;
  char buf[16];
  for (size_t i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof(buf), "id-%05zu", i);
    index.ids.emplace_back(buf);
    const Tensor v = random_unit(dim, seed * 100003 + i);
    index.vectors.insert(index.vectors.end(), v.data(), v.data() + dim);
  }
  return index;
}

std::vector<std::string> id_list(const RankedList& list) {
  std::vector<std::string> ids;
  for (const RankedEntry& e : list) ids.push_back(e.id);
  return ids;
}

}  // namespace

TEST_CASE("build_index basics") {
  const EncoderModel enc = tiny_encoder(3);
  SUBCASE("empty corpus yields an empty index") {
    const VectorIndex index = build_index({}, enc, 32);
    CHECK(index.size() == 0);
  }
  SUBCASE("one vector per record, rebuilds are identical") {
    const Corpus corpus = tiny_corpus(12, 5);
    const VectorIndex a = build_index(corpus, enc, 32);
    const VectorIndex b = build_index(corpus, enc, 32);
    CHECK(a.size() == corpus.size());
    CHECK(a.ids == b.ids);
    CHECK(a.vectors == b.vectors);
    CHECK(a.encoder_fingerprint == b.encoder_fingerprint);
  }
  SUBCASE("threaded builds match the serial result") {
    const Corpus corpus = tiny_corpus(17, 6);
    const VectorIndex serial = build_index(corpus, enc, 32, 1);
    const VectorIndex threaded = build_index(corpus, enc, 32, 4);
    CHECK(serial.ids == threaded.ids);
    CHECK(serial.vectors == threaded.vectors);
  }
  SUBCASE("duplicate ids are rejected") {
    Corpus corpus = tiny_corpus(3, 7);
    corpus[2].id = corpus[0].id;
    CHECK_THROWS_AS(build_index(corpus, enc, 32), DataError);
  }
}

TEST_CASE("recall_topk equals the brute-force ordering") {
  SUBCASE("random vectors") {
    const VectorIndex index = random_index(200, 8, 11);
    for (uint64_t qs = 0; qs < 20; ++qs) {
      const Tensor q = random_unit(8, 7777 + qs);
      const RankedList full = brute_force_search(index, q);
      for (size_t k : {1ul, 5ul, 50ul, 200ul, 500ul}) {
        const RankedList top = recall_topk(index, q, k);
        const size_t expect = std::min(k, index.size());
        REQUIRE(top.size() == expect);
        for (size_t i = 0; i < expect; ++i) {
          CHECK(top[i].id == full[i].id);
          CHECK(top[i].score == full[i].score);
        }
      }
    }
  }
  SUBCASE("ties break by ascending id") {
    VectorIndex index;
    index.dim = 2;
    const std::vector<std::pair<std::string, std::vector<double>>> rows = {
        {"bbb", {1, 0}}, {"aaa", {1, 0}}, {"ccc", {0, 1}}, {"abc", {1, 0}}};
    for (const auto& [id, v] : rows) {
      index.ids.push_back(id);
      index.vectors.insert(index.vectors.end(), v.begin(), v.end());
    }
    const Tensor q = Tensor::vec({1, 0});
    const RankedList top = recall_topk(index, q, 4);
    CHECK(id_list(top) ==
          std::vector<std::string>{"aaa", "abc", "bbb", "ccc"});
    const RankedList full = brute_force_search(index, q);
    CHECK(id_list(full) == id_list(top));
  }
  SUBCASE("self-retrieval puts the stored vector first with score 1") {
    const VectorIndex index = random_index(50, 8, 13);
    const Tensor q(std::vector<size_t>{8},
                   {index.vec(17).begin(), index.vec(17).end()});
    const RankedList top = recall_topk(index, q, 3);
    CHECK(top[0].id == index.ids[17]);
    CHECK(top[0].score == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("k below one is rejected") {
    const VectorIndex index = random_index(5, 8, 17);
    CHECK_THROWS_AS(recall_topk(index, random_unit(8, 1), 0), ParameterError);
  }
}

TEST_CASE("rerank") {
  const Corpus corpus = tiny_corpus(6, 23);
  const CorpusAccessor accessor = make_corpus_accessor(corpus);
  RankedList candidates;
  for (size_t i = 0; i < corpus.size(); ++i)
    candidates.entries.push_back(
        {corpus[i].id, 1.0 - 0.1 * double(i), Stage::kRecall});

  SUBCASE("equal scores preserve the incoming order") {
    const PairScorer flat = [](std::string_view, std::string_view,
                               std::string_view) { return 0.5; };
    const RankedList out = rerank("query text", candidates, flat, accessor);
    CHECK(id_list(out) == id_list(candidates));
    for (const RankedEntry& e : out) CHECK(e.stage == Stage::kRerank);
  }
  SUBCASE("an oracle scorer forces the true pair first") {
    const std::string truth = corpus[4].id;
    const PairScorer oracle = [&](std::string_view id, std::string_view,
                                  std::string_view) {
      return id == truth ? 1.0 : 0.0;
    };
    const RankedList out = rerank("query text", candidates, oracle, accessor);
    CHECK(out[0].id == truth);
  }
  SUBCASE("the candidate set is preserved") {
    const EncoderModel cross = [] {
      EncoderConfig cfg;
      cfg.vocab_buckets = 64;
      cfg.dim = 8;
      cfg.hidden = 16;
      cfg.layers = 2;
      cfg.score_head = true;
      cfg.seed = 31;
      return make_encoder(cfg);
    }();
    const RankedList out = rerank("find the thing", candidates,
                                  make_cross_scorer(cross, 32), accessor);
    std::set<std::string> before(id_list(candidates).begin(),
                                 id_list(candidates).end());
    std::set<std::string> after(id_list(out).begin(), id_list(out).end());
    CHECK(before == after);
    for (size_t i = 1; i < out.size(); ++i)
      CHECK(out[i - 1].score >= out[i].score);
  }
  SUBCASE("unresolvable ids raise a data error") {
    RankedList ghost = candidates;
    ghost.entries[0].id = "missing-id";
    const PairScorer flat = [](std::string_view, std::string_view,
                               std::string_view) { return 0.5; };
    CHECK_THROWS_AS(rerank("q", ghost, flat, accessor), DataError);
  }
}

TEST_CASE("two-stage search composition") {
  const Corpus corpus = tiny_corpus(30, 41);
  const EncoderModel code_enc = tiny_encoder(43);
  const EncoderModel query_enc = tiny_encoder(44);
  const VectorIndex index = build_index(corpus, code_enc, 32);
  const CorpusAccessor accessor = make_corpus_accessor(corpus);
  const QueryEmbedder embedder = make_query_embedder(query_enc, 32);
  const PairScorer half = [](std::string_view id, std::string_view,
                             std::string_view) {
    // Deterministic, id-dependent scores.
    return double(std::hash<std::string_view>{}(id) % 1000) / 1000.0;
  };

  SUBCASE("k greater than the index size re-ranks everything") {
    const RankedList out = spencer_search(corpus[0].query, index, embedder,
                                          half, accessor, 1000);
    CHECK(out.size() == index.size());
    for (const RankedEntry& e : out) CHECK(e.stage == Stage::kRerank);
    for (size_t i = 1; i < out.size(); ++i)
      CHECK(out[i - 1].score >= out[i].score);
  }
  SUBCASE("only the first k positions change; the id multiset never does") {
    const size_t k = 5;
    const RankedList dual =
        brute_force_search(index, embedder(corpus[0].query).values());
    const RankedList two_stage = spencer_search(corpus[0].query, index,
                                                embedder, half, accessor, k);
    REQUIRE(two_stage.size() == dual.size());
    std::set<std::string> head_a, head_b;
    for (size_t i = 0; i < k; ++i) {
      head_a.insert(dual[i].id);
      head_b.insert(two_stage[i].id);
      CHECK(two_stage[i].stage == Stage::kRerank);
    }
    CHECK(head_a == head_b);
    for (size_t i = k; i < dual.size(); ++i) {
      CHECK(two_stage[i].id == dual[i].id);
      CHECK(two_stage[i].stage == Stage::kRecall);
    }
  }
}

TEST_CASE("index file round-trip and failure modes") {
  const auto path =
      std::filesystem::temp_directory_path() / "spencer_index_test.spix";
  const VectorIndex index = random_index(20, 6, 91);
  save_index(index, path.string());

  const VectorIndex loaded = load_index(path.string());
  CHECK(loaded.dim == index.dim);
  CHECK(loaded.ids == index.ids);
  CHECK(loaded.vectors == index.vectors);

  std::vector<uint8_t> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write_bytes = [&](const std::vector<uint8_t>& data,
                               const char* name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p, std::ios::binary)
        .write(reinterpret_cast<const char*>(data.data()), data.size());
    return p;
  };

  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'Q';
    CHECK_THROWS_AS(load_index(write_bytes(bad, "ix_magic.spix").string()),
                    FormatError);
  }
  SUBCASE("wrong version") {
    auto bad = bytes;
    bad[4] = 3;
    CHECK_THROWS_AS(load_index(write_bytes(bad, "ix_ver.spix").string()),
                    VersionError);
  }
  SUBCASE("truncation") {
    auto bad = bytes;
    bad.resize(bad.size() - 9);
    CHECK_THROWS_AS(load_index(write_bytes(bad, "ix_trunc.spix").string()),
                    TruncatedError);
  }
  SUBCASE("corruption") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(load_index(write_bytes(bad, "ix_crc.spix").string()),
                    ChecksumError);
  }
  std::filesystem::remove(path);
}
