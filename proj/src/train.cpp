#include "spencer/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

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

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<Tensor> snapshot(const std::vector<Tensor*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Tensor* p : params) out.push_back(*p);
  return out;
}

void restore(const std::vector<Tensor*>& params,
             const std::vector<Tensor>& snap) {
  for (size_t i = 0; i < params.size(); ++i) *params[i] = snap[i];
}

// Gradients for one binding, in parameter order.
std::vector<const Tensor*> grads_for(const Graph::GradientMap& grads,
                                     const std::vector<Graph::Id>& ids) {
  std::vector<const Tensor*> out;
  out.reserve(ids.size());
  for (Graph::Id id : ids) out.push_back(&grads.at(id));
  return out;
}

std::vector<Graph::Id> binding_ids(const EncoderNodes& nodes) {
  std::vector<Graph::Id> ids;
  ids.push_back(nodes.embedding);
  for (const auto& blk : nodes.blocks) {
    ids.push_back(blk.w1);
    ids.push_back(blk.b1);
    ids.push_back(blk.w2);
    ids.push_back(blk.b2);
  }
  if (nodes.has_head) {
    ids.push_back(nodes.head_w);
    ids.push_back(nodes.head_b);
  }
  return ids;
}

}  // namespace

std::string history_to_jsonl(const History& history) {
  std::string out;
  for (const EpochRecord& rec : history) {
    nlohmann::json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    if (rec.val_metric)
      j["val_metric"] = *rec.val_metric;
    else
      j["val_metric"] = nullptr;
    j["wall_ms"] = rec.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_history_jsonl(const History& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("history: cannot open " + path + " for writing");
  out << history_to_jsonl(history);
  if (!out) throw FileError("history: write to " + path + " failed");
}

DualTrainResult train_dual(const Corpus& train_data, const Corpus& valid_data,
                           EncoderModel query_encoder,
                           EncoderModel code_encoder, const TrainConfig& cfg) {
  if (train_data.empty()) throw DataError("train_dual: empty training data");
  if (query_encoder.dim != code_encoder.dim)
    throw DimensionError("train_dual: encoder dimensions disagree, " +
                         std::to_string(query_encoder.dim) + " vs " +
                         std::to_string(code_encoder.dim));
  if (query_encoder.has_score_head() || code_encoder.has_score_head())
    throw ContractError("train_dual: dual encoders must not carry score heads");
  if (cfg.batch_size < 2)
    throw ParameterError("train_dual: batch size must be >= 2");
  if (cfg.temperature <= 0.0)
    throw ParameterError("train_dual: temperature must be positive");

  query_encoder.dropout_rate = cfg.dropout;
  code_encoder.dropout_rate = cfg.dropout;

  std::vector<Tensor*> params = query_encoder.param_tensors();
  {
    const std::vector<Tensor*> code_params = code_encoder.param_tensors();
    params.insert(params.end(), code_params.begin(), code_params.end());
  }
  AdamW optimizer({cfg.learning_rate, cfg.weight_decay},
                  {params.begin(), params.end()});

  const ContrastiveCtx loss_ctx{cfg.temperature, cfg.loss_form, cfg.max_len};
  History history;
  double best_metric = -HUGE_VAL;
  std::vector<Tensor> best_params;
  size_t stale_epochs = 0;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const uint64_t epoch_seed = derive_seed(cfg.seed, epoch);
    const std::vector<Batch> batches =
        make_batches(train_data.size(), cfg.batch_size, epoch_seed);
    if (batches.empty())
      throw DataError("train_dual: no full batch fits the training data");

    double loss_sum = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const std::vector<const PairRecord*> items =
          batch_items(train_data, batches[bi]);
      const uint64_t base = derive_seed(epoch_seed, bi);

      Graph g;
      const EncoderNodes qn = bind_encoder(g, query_encoder, true);
      const EncoderNodes cn = bind_encoder(g, code_encoder, true);

      const EncodedBatch codes_a =
          encode_batch_node(g, cn, code_encoder, items, Modality::kCode,
                            EncodeCtx::train(derive_seed(base, 1)),
                            cfg.max_len);
      const EncodedBatch codes_b =
          encode_batch_node(g, cn, code_encoder, items, Modality::kCode,
                            EncodeCtx::train(derive_seed(base, 2)),
                            cfg.max_len);
      const EncodedBatch queries_a =
          encode_batch_node(g, qn, query_encoder, items, Modality::kQuery,
                            EncodeCtx::train(derive_seed(base, 3)),
                            cfg.max_len);
      const EncodedBatch queries_b =
          encode_batch_node(g, qn, query_encoder, items, Modality::kQuery,
                            EncodeCtx::train(derive_seed(base, 4)),
                            cfg.max_len);

      const Graph::Id loss_code = contrastive_pair_loss_node(
          g, codes_a, codes_b, cfg.temperature, cfg.loss_form);
      const Graph::Id loss_query = contrastive_pair_loss_node(
          g, queries_a, queries_b, cfg.temperature, cfg.loss_form);
      const Graph::Id loss_cross =
          loss_cross_modality_node(g, codes_a, queries_a, loss_ctx);
      const Graph::Id loss = g.add(g.add(loss_code, loss_query), loss_cross);
      loss_sum += g.value(loss).scalar_value();

      const Graph::GradientMap grads = g.backward(loss);
      std::vector<Graph::Id> ids = binding_ids(qn);
      {
        const std::vector<Graph::Id> code_ids = binding_ids(cn);
        ids.insert(ids.end(), code_ids.begin(), code_ids.end());
      }
      optimizer.step(params, grads_for(grads, ids));
    }

    const PoolSearcher searcher =
        make_dual_pool_searcher(query_encoder, code_encoder, cfg.max_len);
    EvalConfig eval_cfg;
    eval_cfg.pool_size = std::min(cfg.val_pool_size, valid_data.size());
    eval_cfg.seed = derive_seed(cfg.seed, 0x7a11dULL);
    const double val_mrr =
        valid_data.size() >= 2
            ? pooled_eval(valid_data, searcher, eval_cfg).mrr
            : 0.0;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(batches.size());
    rec.val_metric = val_mrr;
    rec.wall_ms = elapsed_ms(t0);
    history.push_back(rec);
    log_info("train-dual epoch " + std::to_string(epoch) + " loss " +
             std::to_string(rec.train_loss) + " val-mrr " +
             std::to_string(val_mrr));

    if (cfg.patience > 0) {
      if (val_mrr > best_metric) {
        best_metric = val_mrr;
        best_params = snapshot(params);
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.patience) {
        log_info("train-dual early stop after epoch " + std::to_string(epoch));
        break;
      }
    }
  }

  if (cfg.patience > 0 && !best_params.empty()) restore(params, best_params);
  return {std::move(query_encoder), std::move(code_encoder),
          std::move(history)};
}

CrossTrainResult train_cross(const Corpus& train_data,
                             const Corpus& valid_data,
                             EncoderModel cross_encoder,
                             const TrainConfig& cfg) {
  if (train_data.empty()) throw DataError("train_cross: empty training data");
  if (!cross_encoder.has_score_head())
    throw ContractError("train_cross: model has no score head");
  if (cfg.batch_size < 2)
    throw ParameterError("train_cross: batch size must be >= 2");

  cross_encoder.dropout_rate = cfg.dropout;
  const Vocabulary vocab = cross_encoder.vocabulary();
  const std::vector<Tensor*> params = cross_encoder.param_tensors();
  AdamW optimizer({cfg.learning_rate, cfg.weight_decay},
                  {params.begin(), params.end()});

  // Fixed validation pairs: each positive plus one mismatched pairing.
  struct LabeledPair {
    const PairRecord* query;
    const PairRecord* code;
    double label;
  };
  std::vector<LabeledPair> val_pairs;
  if (valid_data.size() >= 2) {
    CounterRng rng(derive_seed(cfg.seed, 0xa11dULL));
    for (const PairRecord& rec : valid_data) {
      val_pairs.push_back({&rec, &rec, 1.0});
      size_t j = rng.next_below(valid_data.size());
      while (&valid_data[j] == &rec) j = rng.next_below(valid_data.size());
      val_pairs.push_back({&rec, &valid_data[j], 0.0});
    }
  }
  auto val_accuracy = [&]() -> std::optional<double> {
    if (val_pairs.empty()) return std::nullopt;
    size_t hits = 0;
    for (const LabeledPair& lp : val_pairs) {
      const TokenSequence code_seq =
          tokenize(lp.code->code, vocab, cfg.max_len);
      const TokenSequence query_seq =
          tokenize(lp.query->query, vocab, cfg.max_len);
      const double y = score_pair(cross_encoder, code_seq, query_seq,
                                  EncodeCtx::infer(), cfg.max_len);
      if ((y > 0.5) == (lp.label > 0.5)) ++hits;
    }
    return double(hits) / double(val_pairs.size());
  };

  History history;
  double best_metric = -HUGE_VAL;
  std::vector<Tensor> best_params;
  size_t stale_epochs = 0;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const uint64_t epoch_seed = derive_seed(derive_seed(cfg.seed, 0xc0ULL), epoch);
    const std::vector<Batch> batches =
        make_batches(train_data.size(), cfg.batch_size, epoch_seed);
    if (batches.empty())
      throw DataError("train_cross: no full batch fits the training data");

    double loss_sum = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      const std::vector<const PairRecord*> items =
          batch_items(train_data, batches[bi]);
      const uint64_t base = derive_seed(epoch_seed, bi);
      CounterRng neg_rng(derive_seed(base, 0));

      Graph g;
      const EncoderNodes nodes = bind_encoder(g, cross_encoder, true);
      std::vector<Graph::Id> preds;
      std::vector<double> labels;
      preds.reserve(2 * items.size());
      labels.reserve(2 * items.size());
      for (size_t i = 0; i < items.size(); ++i) {
        size_t j = neg_rng.next_below(items.size());
        while (j == i) j = neg_rng.next_below(items.size());
        const TokenSequence query_seq =
            tokenize(items[i]->query, vocab, cfg.max_len);
        const TokenSequence pos_code =
            tokenize(items[i]->code, vocab, cfg.max_len);
        const TokenSequence neg_code =
            tokenize(items[j]->code, vocab, cfg.max_len);
        preds.push_back(score_pair_node(
            g, nodes, cross_encoder, pos_code, query_seq,
            EncodeCtx::train(derive_seed(base, 2 * i + 1)), cfg.max_len));
        labels.push_back(1.0);
        preds.push_back(score_pair_node(
            g, nodes, cross_encoder, neg_code, query_seq,
            EncodeCtx::train(derive_seed(base, 2 * i + 2)), cfg.max_len));
        labels.push_back(0.0);
      }
      const Graph::Id loss = cross_entropy_node(g, preds, labels);
      loss_sum += g.value(loss).scalar_value();

      const Graph::GradientMap grads = g.backward(loss);
      optimizer.step(params, grads_for(grads, binding_ids(nodes)));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(batches.size());
    rec.val_metric = val_accuracy();
    rec.wall_ms = elapsed_ms(t0);
    history.push_back(rec);
    log_info("train-cross epoch " + std::to_string(epoch) + " loss " +
             std::to_string(rec.train_loss) + " val-acc " +
             (rec.val_metric ? std::to_string(*rec.val_metric) : "n/a"));

    if (cfg.patience > 0 && rec.val_metric) {
      if (*rec.val_metric > best_metric) {
        best_metric = *rec.val_metric;
        best_params = snapshot(params);
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.patience) {
        log_info("train-cross early stop after epoch " +
                 std::to_string(epoch));
        break;
      }
    }
  }

  if (cfg.patience > 0 && !best_params.empty()) restore(params, best_params);
  return {std::move(cross_encoder), std::move(history)};
}

}  // namespace spencer
