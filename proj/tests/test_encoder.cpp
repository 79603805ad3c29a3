#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spencer/checkpoint.hpp"
#include "spencer/encoder.hpp"
#include "spencer/errors.hpp"
#include "spencer/tokenizer.hpp"
#include "support/grad_check.hpp"

using namespace spencer;

namespace {

EncoderModel tiny_encoder(size_t layers = 2, bool head = false,
                          uint64_t seed = 7) {
  EncoderConfig cfg;
  cfg.vocab_buckets = 64;
  cfg.dim = 8;
  cfg.hidden = 16;
  cfg.layers = layers;
  cfg.dropout = 0.2;
  cfg.score_head = head;
  cfg.seed = seed;
  return make_encoder(cfg);
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

bool models_equal(const EncoderModel& a, const EncoderModel& b) {
  return serialize_model(a) == serialize_model(b);
}

}  // namespace

TEST_CASE("tokenize basics") {
  const Vocabulary vocab(100);
  SUBCASE("empty text yields CLS alone") {
    const TokenSequence seq = tokenize("", vocab, 512);
    REQUIRE(seq.ids.size() == 1);
    CHECK(seq.ids[0] == Vocabulary::kCls);
  }
  SUBCASE("deterministic") {
    CHECK(tokenize("alpha beta  gamma", vocab, 512).ids ==
          tokenize("alpha beta  gamma", vocab, 512).ids);
  }
  SUBCASE("truncation keeps CLS plus the first tokens") {
    std::string text;
    for (int i = 0; i < 600; ++i) text += "tok" + std::to_string(i) + " ";
    const TokenSequence seq = tokenize(text, vocab, 512);
    CHECK(seq.ids.size() == 512);
    CHECK(seq.ids[0] == Vocabulary::kCls);
    CHECK(seq.ids[1] == vocab.token_id("tok0"));
  }
  SUBCASE("hashed ids avoid the reserved range") {
    for (int i = 0; i < 500; ++i) {
      const uint32_t id = vocab.token_id("word" + std::to_string(i));
      CHECK(id >= Vocabulary::kReserved);
      CHECK(id < vocab.size);
    }
  }
  SUBCASE("tiny vocabularies are rejected") {
    CHECK_THROWS_AS(Vocabulary(3), ParameterError);
  }
}

TEST_CASE("encode contract") {
  const EncoderModel model = tiny_encoder(3);
  const Vocabulary vocab = model.vocabulary();
  const TokenSequence seq = tokenize("find files by extension", vocab, 64);

  SUBCASE("inference is deterministic and unit-norm") {
    const EmbeddingVector a = encode(model, seq);
    const EmbeddingVector b = encode(model, seq);
    CHECK(a.values() == b.values());
    CHECK(std::fabs(l2_norm(a.values()) - 1.0) <= 1e-9);
  }
  SUBCASE("unit norm holds across random inputs") {
    for (int i = 0; i < 20; ++i) {
      const TokenSequence s =
          tokenize("w" + std::to_string(i * 31) + " w" + std::to_string(i),
                   vocab, 64);
      CHECK(std::fabs(l2_norm(encode(model, s).values()) - 1.0) <= 1e-9);
    }
  }
  SUBCASE("distinct dropout seeds produce distinct vectors") {
    const EmbeddingVector a = encode(model, seq, EncodeCtx::train(1));
    const EmbeddingVector b = encode(model, seq, EncodeCtx::train(2));
    CHECK(cosine(a, b) < 1.0);
  }
  SUBCASE("score-head models are rejected") {
    const EncoderModel cross = tiny_encoder(2, /*head=*/true);
    CHECK_THROWS_AS(encode(cross, seq), ContractError);
  }
}

TEST_CASE("score_pair contract") {
  const EncoderModel cross = tiny_encoder(2, /*head=*/true);
  const Vocabulary vocab = cross.vocabulary();
  const TokenSequence code = tokenize("def read path open", vocab, 64);
  const TokenSequence query = tokenize("read a file", vocab, 64);

  SUBCASE("output strictly inside (0,1), deterministic in infer mode") {
    for (int i = 0; i < 10; ++i) {
      const TokenSequence c =
          tokenize("fn" + std::to_string(i) + " body", vocab, 64);
      const double y = score_pair(cross, c, query);
      CHECK(y > 0.0);
      CHECK(y < 1.0);
    }
    CHECK(score_pair(cross, code, query) == score_pair(cross, code, query));
  }
  SUBCASE("swapping code and query changes the input layout") {
    const TokenSequence ab = build_pair_sequence(code, query, 64);
    const TokenSequence ba = build_pair_sequence(query, code, 64);
    CHECK(ab.ids != ba.ids);
    CHECK(ab.ids[0] == Vocabulary::kCls);
    // SEP sits right after the code tokens.
    CHECK(ab.ids[code.ids.size()] == Vocabulary::kSep);
  }
  SUBCASE("overflow truncates both sides to the shared cap") {
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "t" + std::to_string(i) + " ";
    const TokenSequence big_code = tokenize(long_text, vocab, 64);
    const TokenSequence big_query = tokenize(long_text + "x", vocab, 64);
    const TokenSequence joint = build_pair_sequence(big_code, big_query, 20);
    CHECK(joint.ids.size() == 2 + 9 + 9);
  }
  SUBCASE("dual models cannot score") {
    const EncoderModel dual = tiny_encoder(2);
    CHECK_THROWS_AS(score_pair(dual, code, query), ContractError);
  }
}

TEST_CASE("compress keeps the bottom blocks bitwise") {
  const EncoderModel teacher = tiny_encoder(12);
  const EncoderModel student = compress(teacher, 3);
  CHECK(student.layer_count() == 9);
  CHECK(student.embedding == teacher.embedding);
  for (size_t i = 0; i < 9; ++i) {
    CHECK(student.blocks[i].w1 == teacher.blocks[i].w1);
    CHECK(student.blocks[i].b1 == teacher.blocks[i].b1);
    CHECK(student.blocks[i].w2 == teacher.blocks[i].w2);
    CHECK(student.blocks[i].b2 == teacher.blocks[i].b2);
  }

  CHECK(compress(compress(teacher, 3), 3).layer_count() == 6);
  CHECK_THROWS_AS(compress(teacher, 12), ContractError);
  CHECK_THROWS_AS(compress(teacher, 0), ContractError);

  // The retained prefix computes the same function as a hand-built copy.
  EncoderModel prefix;
  prefix.vocab_buckets = teacher.vocab_buckets;
  prefix.dim = teacher.dim;
  prefix.hidden = teacher.hidden;
  prefix.dropout_rate = teacher.dropout_rate;
  prefix.embedding = teacher.embedding;
  prefix.blocks.assign(teacher.blocks.begin(), teacher.blocks.begin() + 9);
  const Vocabulary vocab = teacher.vocabulary();
  for (int i = 0; i < 5; ++i) {
    const TokenSequence seq =
        tokenize("probe " + std::to_string(i * 17), vocab, 32);
    CHECK(encode(student, seq).values() == encode(prefix, seq).values());
  }

  const EncoderModel cross = tiny_encoder(4, /*head=*/true);
  CHECK(compress(cross, 2).has_score_head());
}

TEST_CASE("checkpoint round-trip and failure modes") {
  const EncoderModel model = tiny_encoder(3, /*head=*/true, 99);
  const auto path = temp_path("spencer_ckpt_test.spnc");

  save_model(model, path.string());
  const EncoderModel loaded = load_model(path.string());
  CHECK(models_equal(model, loaded));
  CHECK(loaded.layer_count() == 3);
  CHECK(loaded.dropout_rate == model.dropout_rate);
  CHECK(loaded.has_score_head());

  const std::vector<uint8_t> bytes = serialize_model(model);

  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    const auto p = temp_path("spencer_ckpt_magic.spnc");
    std::ofstream(p, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()), bad.size());
    CHECK_THROWS_AS(load_model(p.string()), FormatError);
  }
  SUBCASE("wrong version") {
    auto bad = bytes;
    bad[4] = 9;  // version little-endian low byte
    const auto p = temp_path("spencer_ckpt_version.spnc");
    std::ofstream(p, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()), bad.size());
    CHECK_THROWS_AS(load_model(p.string()), VersionError);
  }
  SUBCASE("truncation") {
    auto bad = bytes;
    bad.resize(bad.size() / 2);
    const auto p = temp_path("spencer_ckpt_trunc.spnc");
    std::ofstream(p, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()), bad.size());
    CHECK_THROWS_AS(load_model(p.string()), TruncatedError);
  }
  SUBCASE("payload corruption") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x40;
    const auto p = temp_path("spencer_ckpt_crc.spnc");
    std::ofstream(p, std::ios::binary)
        .write(reinterpret_cast<const char*>(bad.data()), bad.size());
    CHECK_THROWS_AS(load_model(p.string()), ChecksumError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("encoder gradients flow through the whole stack") {
  EncoderModel model = tiny_encoder(2);
  model.dropout_rate = 0.3;
  const Vocabulary vocab = model.vocabulary();
  const TokenSequence seq = tokenize("alpha beta gamma", vocab, 16);
  const Tensor target = spencer::testing::random_unit(model.dim, 5);

  auto loss_value = [&] {
    Graph g;
    const EncoderNodes nodes = bind_encoder(g, model, true);
    const Graph::Id out =
        encode_node(g, nodes, model, seq, EncodeCtx::train(123));
    return g.value(g.cosine(out, g.constant(target))).scalar_value();
  };

  Graph g;
  const EncoderNodes nodes = bind_encoder(g, model, true);
  const Graph::Id out =
      encode_node(g, nodes, model, seq, EncodeCtx::train(123));
  const Graph::Id loss = g.cosine(out, g.constant(target));
  const Graph::GradientMap grads = g.backward(loss);

  std::vector<Graph::Id> ids = {nodes.embedding};
  for (const auto& blk : nodes.blocks) {
    ids.push_back(blk.w1);
    ids.push_back(blk.b1);
    ids.push_back(blk.w2);
    ids.push_back(blk.b2);
  }
  std::vector<const Tensor*> analytic;
  for (Graph::Id id : ids) analytic.push_back(&grads.at(id));

  const auto res = spencer::testing::check_param_gradients(
      loss_value, model.param_tensors(), analytic);
  CAPTURE(res.worst);
  CHECK(res.checked > 500);
  CHECK(res.max_rel_err < 1e-4);
}
