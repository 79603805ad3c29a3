#include "spencer/distill.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>

#include "spencer/errors.hpp"
#include "spencer/evaluation.hpp"
#include "spencer/log.hpp"
#include "spencer/losses.hpp"
#include "spencer/optimizer.hpp"
#include "spencer/rng.hpp"

namespace spencer {

namespace {

using Clock = std::chrono::steady_clock;

void require_aligned(size_t a, size_t b, const char* what) {
  if (a != b)
    throw ContractError(std::string(what) + ": got " + std::to_string(a) +
                        " and " + std::to_string(b) + " vectors");
}

// Stacks per-index cosine scalars into one [n x 1] node.
Graph::Id cosine_column(Graph& g, std::span<const Graph::Id> a,
                        std::span<const Graph::Id> b) {
  std::vector<Graph::Id> cells;
  cells.reserve(a.size());
  for (size_t i = 0; i < a.size(); ++i) cells.push_back(g.cosine(a[i], b[i]));
  return g.concat_rows(cells);
}

std::vector<Graph::Id> constant_rows(Graph& g,
                                     const std::vector<Tensor>& vecs) {
  std::vector<Graph::Id> rows;
  rows.reserve(vecs.size());
  for (const Tensor& v : vecs) rows.push_back(g.constant(v));
  return rows;
}

EncodedBatch constant_batch(Graph& g, const std::vector<Graph::Id>& rows) {
  EncodedBatch out;
  out.rows = rows;
  // Rank-1 constants each count as one row.
  out.matrix = g.concat_rows(out.rows);
  return out;
}

std::vector<Tensor> embed_all(const EncoderModel& model, const Corpus& data,
                              Modality modality, size_t max_len) {
  const Vocabulary vocab = model.vocabulary();
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const PairRecord& rec : data) {
    const std::string& text =
        modality == Modality::kCode ? rec.code : rec.query;
    out.push_back(encode(model, tokenize(text, vocab, max_len)).values());
  }
  return out;
}

std::vector<Graph::Id> student_param_ids(const EncoderNodes& nodes) {
  std::vector<Graph::Id> ids;
  ids.push_back(nodes.embedding);
  for (const auto& blk : nodes.blocks) {
    ids.push_back(blk.w1);
    ids.push_back(blk.b1);
    ids.push_back(blk.w2);
    ids.push_back(blk.b2);
  }
  return ids;
}

}  // namespace

Graph::Id loss_distill_query_node(Graph& g,
                                  std::span<const Graph::Id> teacher_rows,
                                  std::span<const Graph::Id> student_rows) {
  require_aligned(teacher_rows.size(), student_rows.size(),
                  "query alignment loss");
  const Graph::Id cos_col = cosine_column(g, student_rows, teacher_rows);
  const Graph::Id total = g.sum(cos_col);
  return g.add(g.constant(Tensor::scalar(double(teacher_rows.size()))),
               g.scale(total, -1.0));
}

Graph::Id loss_distill_dual_node(Graph& g, std::span<const Graph::Id> code_rows,
                                 std::span<const Graph::Id> teacher_rows,
                                 std::span<const Graph::Id> student_rows) {
  require_aligned(code_rows.size(), teacher_rows.size(), "pair geometry loss");
  require_aligned(code_rows.size(), student_rows.size(), "pair geometry loss");
  const Graph::Id teacher_col = cosine_column(g, code_rows, teacher_rows);
  const Graph::Id student_col = cosine_column(g, student_rows, code_rows);
  const Graph::Id diff = g.add(teacher_col, g.scale(student_col, -1.0));
  return g.sum(g.abs(diff));
}

Graph::Id loss_distill_total_node(Graph& g, std::span<const Graph::Id> code_rows,
                                  std::span<const Graph::Id> teacher_rows,
                                  std::span<const Graph::Id> student_rows,
                                  double query_align_weight,
                                  double pair_align_weight) {
  const Graph::Id qd = loss_distill_query_node(g, teacher_rows, student_rows);
  const Graph::Id dd =
      loss_distill_dual_node(g, code_rows, teacher_rows, student_rows);
  return g.add(g.scale(qd, query_align_weight),
               g.scale(dd, pair_align_weight));
}

double loss_distill_query(const std::vector<Tensor>& teacher,
                          const std::vector<Tensor>& student) {
  Graph g;
  const auto t = constant_rows(g, teacher);
  const auto s = constant_rows(g, student);
  return g.value(loss_distill_query_node(g, t, s)).scalar_value();
}

double loss_distill_dual(const std::vector<Tensor>& codes,
                         const std::vector<Tensor>& teacher,
                         const std::vector<Tensor>& student) {
  Graph g;
  const auto c = constant_rows(g, codes);
  const auto t = constant_rows(g, teacher);
  const auto s = constant_rows(g, student);
  return g.value(loss_distill_dual_node(g, c, t, s)).scalar_value();
}

double loss_distill_total(const std::vector<Tensor>& codes,
                          const std::vector<Tensor>& teacher,
                          const std::vector<Tensor>& student) {
  Graph g;
  const auto c = constant_rows(g, codes);
  const auto t = constant_rows(g, teacher);
  const auto s = constant_rows(g, student);
  return g.value(loss_distill_total_node(g, c, t, s)).scalar_value();
}

DistillResult distill(const EncoderModel& source_query,
                      const EncoderModel& code_encoder,
                      EncoderModel student_init, const Corpus& train_data,
                      const DistillConfig& cfg) {
  if (train_data.empty()) throw DataError("distill: empty training data");
  if (student_init.layer_count() >= source_query.layer_count())
    throw ParameterError("distill: student has " +
                         std::to_string(student_init.layer_count()) +
                         " blocks, not smaller than the source's " +
                         std::to_string(source_query.layer_count()));
  if (student_init.dim != source_query.dim ||
      source_query.dim != code_encoder.dim)
    throw DimensionError("distill: model dimensions disagree");
  if (source_query.has_score_head() || student_init.has_score_head() ||
      code_encoder.has_score_head())
    throw ContractError("distill: expected dual encoders without score heads");
  if (cfg.batch_size < 2)
    throw ParameterError("distill: batch size must be >= 2");

  // The source pair is frozen; its outputs are fixed targets.
  const std::vector<Tensor> teacher_vecs =
      embed_all(source_query, train_data, Modality::kQuery, cfg.max_len);
  const std::vector<Tensor> code_vecs =
      embed_all(code_encoder, train_data, Modality::kCode, cfg.max_len);

  EncoderModel student = std::move(student_init);
  const std::vector<Tensor*> params = student.param_tensors();
  AdamW optimizer({cfg.learning_rate, cfg.weight_decay},
                  {params.begin(), params.end()});

  History history;
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const uint64_t epoch_seed = derive_seed(derive_seed(cfg.seed, 0xd1ULL), epoch);
    const std::vector<Batch> batches =
        make_batches(train_data.size(), cfg.batch_size, epoch_seed);
    if (batches.empty())
      throw DataError("distill: no full batch fits the training data");

    double loss_sum = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const uint64_t base = derive_seed(epoch_seed, bi);
      const std::vector<const PairRecord*> items =
          batch_items(train_data, batches[bi]);

      Graph g;
      const EncoderNodes sn = bind_encoder(g, student, true);
      std::vector<Tensor> teacher_batch, code_batch;
      teacher_batch.reserve(items.size());
      code_batch.reserve(items.size());
      for (size_t idx : batches[bi].indices) {
        teacher_batch.push_back(teacher_vecs[idx]);
        code_batch.push_back(code_vecs[idx]);
      }
      const std::vector<Graph::Id> teacher_rows = constant_rows(g, teacher_batch);
      const std::vector<Graph::Id> code_rows = constant_rows(g, code_batch);

      const EncodedBatch student_view =
          encode_batch_node(g, sn, student, items, Modality::kQuery,
                            EncodeCtx::train(derive_seed(base, 1)),
                            cfg.max_len);

      Graph::Id loss = loss_distill_total_node(
          g, code_rows, teacher_rows, student_view.rows,
          cfg.query_align_weight, cfg.pair_align_weight);

      if (cfg.variant == DistillVariant::kContrastive) {
        const EncodedBatch student_second =
            encode_batch_node(g, sn, student, items, Modality::kQuery,
                              EncodeCtx::train(derive_seed(base, 2)),
                              cfg.max_len);
        const Graph::Id query_term = contrastive_pair_loss_node(
            g, student_view, student_second, cfg.temperature, cfg.loss_form);
        const EncodedBatch codes_view = constant_batch(g, code_rows);
        const Graph::Id cross_term = contrastive_pair_loss_node(
            g, codes_view, student_view, cfg.temperature, cfg.loss_form);
        loss = g.add(loss, g.scale(g.add(query_term, cross_term),
                                   cfg.contrastive_weight));
      }

      loss_sum += g.value(loss).scalar_value();
      const Graph::GradientMap grads = g.backward(loss);
      std::vector<const Tensor*> grad_ptrs;
      for (Graph::Id id : student_param_ids(sn))
        grad_ptrs.push_back(&grads.at(id));
      optimizer.step(params, grad_ptrs);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(batches.size());
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    history.push_back(rec);
    log_debug("distill epoch " + std::to_string(epoch) + " loss " +
              std::to_string(rec.train_loss));
  }
  return {std::move(student), std::move(history)};
}

std::vector<size_t> SelectionTrace::visited_sizes() const {
  std::vector<size_t> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back(r.a2_layers);
  return out;
}

std::string SelectionTrace::to_json() const {
  nlohmann::json j;
  j["teacher_score"] = teacher_score;
  j["iterations"] = nlohmann::json::array();
  for (const Record& r : records) {
    nlohmann::json jr;
    jr["a1_layers"] = r.a1_layers;
    jr["a2_layers"] = r.a2_layers;
    jr["score_a1"] = r.score_a1 ? nlohmann::json(*r.score_a1)
                                : nlohmann::json(nullptr);
    jr["score_a2"] = r.score_a2 ? nlohmann::json(*r.score_a2)
                                : nlohmann::json(nullptr);
    jr["branch"] = r.branch;
    jr["score_t"] = teacher_score;
    jr["score_s"] = r.score_s;
    j["iterations"].push_back(std::move(jr));
  }
  j["final"]["layers"] = final.layers;
  j["final"]["score"] = final.score;
  j["final"]["threshold_violated"] = final.threshold_violated;
  j["interpretation_notes"] = notes;
  return j.dump(2);
}

SelectionResult select_teaching_assistant_with(const EncoderModel& teacher,
                                               const DistillConfig& cfg,
                                               const SelectionHooks& hooks) {
  if (cfg.layer_drop < 1)
    throw ParameterError("assistant selection: layer_drop must be >= 1");
  if (cfg.min_layers < 1)
    throw ParameterError("assistant selection: min_layers must be >= 1");
  if (teacher.layer_count() <= cfg.min_layers)
    throw ContractError("assistant selection: teacher already has " +
                        std::to_string(teacher.layer_count()) +
                        " blocks, nothing to compress at floor " +
                        std::to_string(cfg.min_layers));
  if (teacher.layer_count() <= cfg.layer_drop)
    throw ContractError(
        "assistant selection: teacher too small for one compression step");

  SelectionTrace trace;
  trace.notes = {
      "when the candidate distilled from the lower assistant wins, the pair "
      "shifts down: A1 takes A2's place and A2 takes the winning candidate",
      "scores are pooled validation results for each candidate query encoder "
      "paired with the fixed code encoder",
      "the returned student is the last candidate whose score drop against "
      "the teacher stayed below the threshold; if even the first candidate "
      "violates it, that candidate is returned with threshold_violated set"};

  EncoderModel a1 = teacher;
  EncoderModel a2 = hooks.distill_fn(a1, compress(teacher, cfg.layer_drop),
                                     derive_seed(cfg.seed, 0));
  const double score_teacher = hooks.validate_fn(teacher);
  double score_s = hooks.validate_fn(a2);
  trace.teacher_score = score_teacher;

  EncoderModel selected = a2;
  double selected_score = score_s;
  trace.records.push_back({a1.layer_count(), a2.layer_count(), std::nullopt,
                           score_s, "init", score_s});
  log_info("assistant selection: teacher score " +
           std::to_string(score_teacher) + ", first student (" +
           std::to_string(a2.layer_count()) + " blocks) score " +
           std::to_string(score_s));

  size_t iteration = 1;
  while (score_teacher - score_s < cfg.drop_threshold) {
    if (a2.layer_count() < cfg.min_layers + cfg.layer_drop) break;
    const size_t target = a2.layer_count() - cfg.layer_drop;
    EncoderModel temp1 =
        hooks.distill_fn(a1, compress(a1, a1.layer_count() - target),
                         derive_seed(cfg.seed, 2 * iteration));
    EncoderModel temp2 =
        hooks.distill_fn(a2, compress(a2, a2.layer_count() - target),
                         derive_seed(cfg.seed, 2 * iteration + 1));
    const double score_a1 = hooks.validate_fn(temp1);
    const double score_a2 = hooks.validate_fn(temp2);

    SelectionTrace::Record rec;
    rec.score_a1 = score_a1;
    rec.score_a2 = score_a2;
    if (score_a1 > score_a2) {
      a2 = std::move(temp1);
      score_s = score_a1;
      rec.branch = "keep-a1";
    } else {
      a1 = std::move(a2);
      a2 = std::move(temp2);
      score_s = score_a2;
      rec.branch = "advance";
    }
    rec.a1_layers = a1.layer_count();
    rec.a2_layers = a2.layer_count();
    rec.score_s = score_s;
    trace.records.push_back(rec);
    log_info("assistant selection: size " + std::to_string(target) +
             " candidates scored " + std::to_string(score_a1) + " / " +
             std::to_string(score_a2) + ", " + rec.branch);

    if (score_teacher - score_s < cfg.drop_threshold) {
      selected = a2;
      selected_score = score_s;
    }
    ++iteration;
  }

  trace.final.layers = selected.layer_count();
  trace.final.score = selected_score;
  trace.final.threshold_violated =
      score_teacher - selected_score >= cfg.drop_threshold;
  return {std::move(selected), std::move(trace)};
}

SelectionResult select_teaching_assistant(const EncoderModel& teacher,
                                          const EncoderModel& code_encoder,
                                          const Corpus& train_data,
                                          const Corpus& valid_data,
                                          const DistillConfig& cfg) {
  SelectionHooks hooks;
  hooks.distill_fn = [&](const EncoderModel& source, const EncoderModel& init,
                         uint64_t seed) {
    DistillConfig run = cfg;
    run.seed = seed;
    return distill(source, code_encoder, init, train_data, run).student;
  };
  hooks.validate_fn = [&](const EncoderModel& query_encoder) {
    const PoolSearcher searcher =
        make_dual_pool_searcher(query_encoder, code_encoder, cfg.max_len);
    EvalConfig eval_cfg;
    eval_cfg.pool_size = std::min(cfg.val_pool_size, valid_data.size());
    eval_cfg.ks = {cfg.metric.k};
    eval_cfg.seed = derive_seed(cfg.seed, 0xe7a1ULL);
    const EvalReport report = pooled_eval(valid_data, searcher, eval_cfg);
    return cfg.metric.kind == ValMetric::kMrr ? report.mrr
                                              : report.recall_at.at(cfg.metric.k);
  };
  return select_teaching_assistant_with(teacher, cfg, hooks);
}

}  // namespace spencer
