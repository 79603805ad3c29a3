#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spencer/checkpoint.hpp"
#include "spencer/distill.hpp"
#include "spencer/errors.hpp"
#include "spencer/losses.hpp"
#include "support/grad_check.hpp"

using namespace spencer;
using spencer::testing::random_unit;

namespace {

EncoderModel tiny_encoder(uint64_t seed, size_t layers, size_t dim = 8) {
  EncoderConfig cfg;
  cfg.vocab_buckets = 64;
  cfg.dim = dim;
  cfg.hidden = 2 * dim;
  cfg.layers = layers;
  cfg.dropout = 0.2;
  cfg.seed = seed;
  return make_encoder(cfg);
}

Corpus tiny_corpus(size_t n, uint64_t seed) {
  SyntheticSpec spec;
  spec.count = n;
  spec.vocab = 30;
  spec.code_len_min = 3;
  spec.code_len_max = 6;
  spec.query_len_min = 2;
  spec.query_len_max = 4;
  spec.noise = 0.1;
  spec.seed = seed;
  return synthesize(spec);
}

std::vector<Tensor> embed_queries(const EncoderModel& model,
                                  const Corpus& corpus) {
  std::vector<Tensor> out;
  const Vocabulary vocab = model.vocabulary();
  for (const PairRecord& rec : corpus)
    out.push_back(encode(model, tokenize(rec.query, vocab, 32)).values());
  return out;
}

std::vector<Tensor> embed_codes(const EncoderModel& model,
                                const Corpus& corpus) {
  std::vector<Tensor> out;
  const Vocabulary vocab = model.vocabulary();
  for (const PairRecord& rec : corpus)
    out.push_back(encode(model, tokenize(rec.code, vocab, 32)).values());
  return out;
}

}  // namespace

TEST_CASE("query alignment loss fixtures") {
  const Tensor q = random_unit(6, 1);
  SUBCASE("identical vectors give exactly zero") {
    CHECK(loss_distill_query({q, q}, {q, q}) == 0.0);
  }
  SUBCASE("an antipodal pair gives two") {
    CHECK(loss_distill_query({q}, {scale(q, -1.0)}) ==
          doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("an orthogonal pair gives one") {
    const Tensor a = Tensor::vec({1, 0, 0});
    const Tensor b = Tensor::vec({0, 1, 0});
    CHECK(loss_distill_query({a}, {b}) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(loss_distill_query({q, q}, {q}), ContractError);
  }
}

TEST_CASE("pair geometry loss fixtures") {
  SUBCASE("identical students give exactly zero") {
    const Tensor c = random_unit(5, 2);
    const Tensor q = random_unit(5, 3);
    CHECK(loss_distill_dual({c}, {q}, {q}) == 0.0);
  }
  SUBCASE("constructed 0.8 vs 0.5 gap gives 0.3") {
    // Unit vectors in the plane with known cosines against c = (1, 0).
    const Tensor c = Tensor::vec({1, 0});
    const auto on_circle = [](double cosv) {
      return Tensor::vec({cosv, std::sqrt(1.0 - cosv * cosv)});
    };
    CHECK(loss_distill_dual({c}, {on_circle(0.8)}, {on_circle(0.5)}) ==
          doctest::Approx(0.3).epsilon(1e-12));
  }
  SUBCASE("a common rotation changes nothing") {
    // Rotation by angle theta in 2-D.
    const double theta = 0.83;
    const auto rot = [&](const Tensor& v) {
      return Tensor::vec(
          {std::cos(theta) * v.at(0) - std::sin(theta) * v.at(1),
           std::sin(theta) * v.at(0) + std::cos(theta) * v.at(1)});
    };
    const Tensor c = Tensor::vec({1, 0});
    const Tensor q = Tensor::vec({0.6, 0.8});
    const Tensor s = Tensor::vec({0.1, std::sqrt(0.99)});
    const double base = loss_distill_dual({c}, {q}, {s});
    const double rotated =
        loss_distill_dual({rot(c)}, {rot(q)}, {rot(s)});
    CHECK(rotated == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("total distillation loss is exactly zero for a cloned student") {
  const Corpus corpus = tiny_corpus(4, 7);
  const EncoderModel teacher = tiny_encoder(11, 3);
  const EncoderModel code_enc = tiny_encoder(12, 3);
  const std::vector<Tensor> q = embed_queries(teacher, corpus);
  const std::vector<Tensor> c = embed_codes(code_enc, corpus);
  // A bitwise copy of the teacher in inference mode reproduces q exactly.
  const EncoderModel clone = teacher;
  const std::vector<Tensor> q_hat = embed_queries(clone, corpus);
  CHECK(loss_distill_query(q, q_hat) == 0.0);
  CHECK(loss_distill_dual(c, q, q_hat) == 0.0);
  CHECK(loss_distill_total(c, q, q_hat) == 0.0);
}

TEST_CASE("distillation losses match the term-by-term recomputation") {
  const Corpus corpus = tiny_corpus(4, 17);
  const EncoderModel teacher = tiny_encoder(21, 3);
  const EncoderModel code_enc = tiny_encoder(22, 3);
  const EncoderModel student = tiny_encoder(23, 2);
  const std::vector<Tensor> q = embed_queries(teacher, corpus);
  const std::vector<Tensor> c = embed_codes(code_enc, corpus);
  const std::vector<Tensor> q_hat = embed_queries(student, corpus);

  double qd = 0.0, dd = 0.0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    qd += 1.0 - cosine(q_hat[i], q[i]);
    dd += std::fabs(cosine(c[i], q[i]) - cosine(q_hat[i], c[i]));
  }
  CHECK(loss_distill_query(q, q_hat) == doctest::Approx(qd).epsilon(1e-9));
  CHECK(loss_distill_dual(c, q, q_hat) == doctest::Approx(dd).epsilon(1e-9));
  CHECK(loss_distill_total(c, q, q_hat) ==
        doctest::Approx(qd + dd).epsilon(1e-9));
}

TEST_CASE("distillation loss gradients match finite differences") {
  const Corpus corpus = tiny_corpus(3, 27);
  const EncoderModel teacher = tiny_encoder(31, 2);
  const EncoderModel code_enc = tiny_encoder(32, 2);
  EncoderModel student = compress(teacher, 1);
  const std::vector<Tensor> q = embed_queries(teacher, corpus);
  const std::vector<Tensor> c = embed_codes(code_enc, corpus);
  std::vector<const PairRecord*> items;
  for (const PairRecord& rec : corpus) items.push_back(&rec);

  auto build = [&](Graph& g, const EncoderNodes& nodes) {
    std::vector<Graph::Id> trows, crows;
    for (const Tensor& t : q) trows.push_back(g.constant(t));
    for (const Tensor& t : c) crows.push_back(g.constant(t));
    const EncodedBatch view = encode_batch_node(
        g, nodes, student, items, Modality::kQuery, EncodeCtx::train(99), 32);
    return loss_distill_total_node(g, crows, trows, view.rows);
  };
  auto loss_value = [&] {
    Graph g;
    const EncoderNodes nodes = bind_encoder(g, student, true);
    return g.value(build(g, nodes)).scalar_value();
  };
  Graph g;
  const EncoderNodes nodes = bind_encoder(g, student, true);
  const Graph::GradientMap grads = g.backward(build(g, nodes));
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
      loss_value, student.param_tensors(), analytic);
  CAPTURE(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("distill run behavior") {
  const Corpus corpus = tiny_corpus(12, 37);
  const EncoderModel teacher = tiny_encoder(41, 3);
  const EncoderModel code_enc = tiny_encoder(42, 3);

  DistillConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.max_len = 32;
  cfg.seed = 5;

  SUBCASE("zero learning rate returns the initialization unchanged") {
    DistillConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    frozen.weight_decay = 0.0;
    const EncoderModel init = compress(teacher, 1);
    const DistillResult res =
        distill(teacher, code_enc, init, corpus, frozen);
    CHECK(serialize_model(res.student) == serialize_model(init));
  }
  SUBCASE("seeded runs are bitwise reproducible") {
    DistillConfig live = cfg;
    live.learning_rate = 1e-3;
    const auto run = [&] {
      return distill(teacher, code_enc, compress(teacher, 1), corpus, live)
          .student;
    };
    CHECK(serialize_model(run()) == serialize_model(run()));
  }
  SUBCASE("the frozen pair is never touched") {
    const std::vector<uint8_t> teacher_before = serialize_model(teacher);
    const std::vector<uint8_t> code_before = serialize_model(code_enc);
    DistillConfig live = cfg;
    live.learning_rate = 1e-3;
    live.variant = DistillVariant::kContrastive;
    distill(teacher, code_enc, compress(teacher, 1), corpus, live);
    CHECK(serialize_model(teacher) == teacher_before);
    CHECK(serialize_model(code_enc) == code_before);
  }
  SUBCASE("a student as large as the source is rejected") {
    CHECK_THROWS_AS(distill(teacher, code_enc, teacher, corpus, cfg),
                    ParameterError);
  }
  SUBCASE("contrastive variant with weight zero equals the base loss") {
    const EncoderModel student = tiny_encoder(43, 2);
    const std::vector<Tensor> q = embed_queries(teacher, corpus);
    const std::vector<Tensor> c = embed_codes(code_enc, corpus);
    const std::vector<Tensor> q_hat = embed_queries(student, corpus);
    // At the loss level: the weighted sum reduces to the base total.
    Graph g;
    std::vector<Graph::Id> trows, crows, srows;
    for (const Tensor& t : q) trows.push_back(g.constant(t));
    for (const Tensor& t : c) crows.push_back(g.constant(t));
    for (const Tensor& t : q_hat) srows.push_back(g.constant(t));
    const Graph::Id base = loss_distill_total_node(g, crows, trows, srows);
    EncodedBatch cview, sview;
    cview.rows = crows;
    cview.matrix = g.concat_rows(crows);
    sview.rows = srows;
    sview.matrix = g.concat_rows(srows);
    const Graph::Id contrastive = contrastive_pair_loss_node(
        g, cview, sview, 0.05, LossForm::kExclusive);
    const Graph::Id weighted =
        g.add(base, g.scale(contrastive, 0.0));
    CHECK(g.value(weighted).scalar_value() == g.value(base).scalar_value());
  }
}

TEST_CASE("assistant selection with scripted hooks") {
  const EncoderModel teacher = tiny_encoder(51, 12, 4);

  // Instant "distillation": return the initialization.
  SelectionHooks hooks;
  hooks.distill_fn = [](const EncoderModel&, const EncoderModel& init,
                        uint64_t) { return init; };

  SUBCASE("a huge threshold walks down to the floor") {
    hooks.validate_fn = [](const EncoderModel&) { return 0.5; };
    DistillConfig cfg;
    cfg.layer_drop = 3;
    cfg.min_layers = 1;
    cfg.drop_threshold = 1.0;
    const SelectionResult res =
        select_teaching_assistant_with(teacher, cfg, hooks);
    CHECK(res.trace.visited_sizes() == std::vector<size_t>{9, 6, 3});
    CHECK(res.student.layer_count() == 3);
    CHECK(res.trace.final.threshold_violated == false);
    CHECK(res.trace.records.size() <= (12 - 1 + 2) / 3);  // ceil(11/3)
    // Exactly two candidates per loop iteration, one branch chosen.
    for (size_t i = 1; i < res.trace.records.size(); ++i) {
      CHECK(res.trace.records[i].score_a1.has_value());
      CHECK(res.trace.records[i].score_a2.has_value());
    }
  }

  SUBCASE("zero threshold stops before the loop") {
    // Any positive drop violates a zero threshold immediately.
    hooks.validate_fn = [&](const EncoderModel& m) {
      return m.layer_count() == teacher.layer_count() ? 0.9 : 0.8;
    };
    DistillConfig cfg;
    cfg.layer_drop = 3;
    cfg.min_layers = 1;
    cfg.drop_threshold = 0.0;
    const SelectionResult res =
        select_teaching_assistant_with(teacher, cfg, hooks);
    CHECK(res.student.layer_count() == 9);
    CHECK(res.trace.records.size() == 1);
    CHECK(res.trace.final.threshold_violated == true);
  }

  SUBCASE("a stronger lower candidate advances the pair") {
    // Candidates distilled from the smaller source always win.
    std::vector<std::pair<size_t, size_t>> sources;  // (a1, a2) per round
    hooks.distill_fn = [&](const EncoderModel& source,
                           const EncoderModel& init, uint64_t) {
      sources.emplace_back(source.layer_count(), init.layer_count());
      return init;
    };
    int call = 0;
    hooks.validate_fn = [&](const EncoderModel& m) {
      if (m.layer_count() == 12) return 0.9;   // teacher
      if (m.layer_count() == 9) return 0.89;   // first student
      // Inside each round the Temp2 (from the lower assistant) wins.
      return 0.85 + 0.01 * ((call++ % 2 == 0) ? 0 : 1);
    };
    DistillConfig cfg;
    cfg.layer_drop = 3;
    cfg.min_layers = 1;
    cfg.drop_threshold = 1.0;
    const SelectionResult res =
        select_teaching_assistant_with(teacher, cfg, hooks);
    REQUIRE(res.trace.records.size() == 3);
    CHECK(res.trace.records[1].branch == "advance");
    CHECK(res.trace.records[2].branch == "advance");
    // After the first advance the pair is (9, 6): round two distills from
    // sizes 9 and 6 down to 3.
    REQUIRE(sources.size() == 5);
    CHECK(sources[3].first == 9);
    CHECK(sources[4].first == 6);
  }

  SUBCASE("a stronger upper candidate keeps the teacher side") {
    hooks.distill_fn = [](const EncoderModel&, const EncoderModel& init,
                          uint64_t) { return init; };
    int round = 0;
    hooks.validate_fn = [&](const EncoderModel& m) {
      if (m.layer_count() == 12) return 0.9;
      if (m.layer_count() == 9) return 0.89;
      // Temp1 (validated first) beats Temp2.
      return (round++ % 2 == 0) ? 0.88 : 0.80;
    };
    DistillConfig cfg;
    cfg.layer_drop = 3;
    cfg.min_layers = 1;
    cfg.drop_threshold = 1.0;
    const SelectionResult res =
        select_teaching_assistant_with(teacher, cfg, hooks);
    CHECK(res.trace.records[1].branch == "keep-a1");
    // A1 never moved off the teacher.
    CHECK(res.trace.records[1].a1_layers == 12);
  }

  SUBCASE("trace serializes to JSON with notes") {
    hooks.validate_fn = [](const EncoderModel&) { return 0.5; };
    DistillConfig cfg;
    cfg.layer_drop = 6;
    cfg.min_layers = 1;
    cfg.drop_threshold = 1.0;
    const SelectionResult res =
        select_teaching_assistant_with(teacher, cfg, hooks);
    const std::string json = res.trace.to_json();
    CHECK(json.find("iterations") != std::string::npos);
    CHECK(json.find("threshold_violated") != std::string::npos);
    CHECK(json.find("interpretation_notes") != std::string::npos);
  }

  SUBCASE("a teacher at the floor is rejected") {
    const EncoderModel small = tiny_encoder(52, 2, 4);
    DistillConfig cfg;
    cfg.min_layers = 2;
    hooks.validate_fn = [](const EncoderModel&) { return 0.5; };
    CHECK_THROWS_AS(select_teaching_assistant_with(small, cfg, hooks),
                    ContractError);
  }
}

TEST_CASE("assistant selection end to end with real distillation") {
  // Tiny but real: models of width 4, a 30-record corpus, one epoch.
  const Corpus corpus = tiny_corpus(30, 71);
  Corpus train(corpus.begin(), corpus.begin() + 20);
  Corpus valid(corpus.begin() + 20, corpus.end());

  EncoderConfig ecfg;
  ecfg.vocab_buckets = 32;
  ecfg.dim = 4;
  ecfg.hidden = 8;
  ecfg.layers = 4;
  ecfg.seed = 81;
  const EncoderModel teacher = make_encoder(ecfg);
  ecfg.seed = 82;
  const EncoderModel code_enc = make_encoder(ecfg);

  DistillConfig cfg;
  cfg.layer_drop = 1;
  cfg.min_layers = 2;
  cfg.drop_threshold = 1.0;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.max_len = 32;
  cfg.val_pool_size = 10;
  cfg.seed = 3;

  const SelectionResult res =
      select_teaching_assistant(teacher, code_enc, train, valid, cfg);
  CHECK(res.trace.visited_sizes() == std::vector<size_t>{3, 2});
  CHECK(res.student.layer_count() == 2);
  CHECK(res.trace.teacher_score > 0.0);
}
