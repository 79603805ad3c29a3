#include "spencer/losses.hpp"

#include "spencer/errors.hpp"
#include "spencer/rng.hpp"

namespace spencer {

double contrastive_core(const Tensor& pos, const Tensor& sims, double tau,
                        LossForm form) {
  Graph g;
  Graph::Id loss =
      g.contrastive_core(g.constant(pos), g.constant(sims), tau, form);
  return g.value(loss).scalar_value();
}

EncodedBatch encode_batch_node(Graph& g, const EncoderNodes& nodes,
                               const EncoderModel& model,
                               const std::vector<const PairRecord*>& items,
                               Modality modality, const EncodeCtx& ctx,
                               size_t max_len) {
  if (items.empty()) throw ContractError("encode_batch: empty batch");
  const Vocabulary vocab = model.vocabulary();
  EncodedBatch out;
  out.rows.reserve(items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string& text =
        modality == Modality::kCode ? items[i]->code : items[i]->query;
    const TokenSequence seq = tokenize(text, vocab, max_len);
    EncodeCtx item_ctx = ctx;
    if (ctx.mode == EncodeMode::kTrain)
      item_ctx.seed = derive_seed(ctx.seed, i);
    out.rows.push_back(encode_node(g, nodes, model, seq, item_ctx));
  }
  out.matrix = g.concat_rows(out.rows);
  return out;
}

Graph::Id contrastive_pair_loss_node(Graph& g, const EncodedBatch& anchor,
                                     const EncodedBatch& other, double tau,
                                     LossForm form) {
  if (anchor.rows.size() != other.rows.size())
    throw ContractError("contrastive loss: mismatched batch views");
  // Positives via the cosine op so identical views yield exactly 1.
  std::vector<Graph::Id> pos;
  pos.reserve(anchor.rows.size());
  for (size_t i = 0; i < anchor.rows.size(); ++i)
    pos.push_back(g.cosine(anchor.rows[i], other.rows[i]));
  Graph::Id pos_col = g.concat_rows(pos);
  Graph::Id sims = g.matmul(anchor.matrix, g.transpose(other.matrix));
  return g.contrastive_core(pos_col, sims, tau, form);
}

Graph::Id loss_code_modality_node(Graph& g, const EncoderNodes& code_nodes,
                                  const EncoderModel& code_encoder,
                                  const std::vector<const PairRecord*>& items,
                                  const ContrastiveCtx& ctx, uint64_t seed_a,
                                  uint64_t seed_b) {
  const EncodedBatch first =
      encode_batch_node(g, code_nodes, code_encoder, items, Modality::kCode,
                        EncodeCtx::train(seed_a), ctx.max_len);
  const EncodedBatch second =
      encode_batch_node(g, code_nodes, code_encoder, items, Modality::kCode,
                        EncodeCtx::train(seed_b), ctx.max_len);
  return contrastive_pair_loss_node(g, first, second, ctx.tau, ctx.form);
}

Graph::Id loss_query_modality_node(Graph& g, const EncoderNodes& query_nodes,
                                   const EncoderModel& query_encoder,
                                   const std::vector<const PairRecord*>& items,
                                   const ContrastiveCtx& ctx, uint64_t seed_a,
                                   uint64_t seed_b) {
  const EncodedBatch first =
      encode_batch_node(g, query_nodes, query_encoder, items, Modality::kQuery,
                        EncodeCtx::train(seed_a), ctx.max_len);
  const EncodedBatch second =
      encode_batch_node(g, query_nodes, query_encoder, items, Modality::kQuery,
                        EncodeCtx::train(seed_b), ctx.max_len);
  return contrastive_pair_loss_node(g, first, second, ctx.tau, ctx.form);
}

Graph::Id loss_cross_modality_node(Graph& g, const EncodedBatch& codes,
                                   const EncodedBatch& queries,
                                   const ContrastiveCtx& ctx) {
  return contrastive_pair_loss_node(g, codes, queries, ctx.tau, ctx.form);
}

double loss_code_modality(const EncoderModel& code_encoder,
                          const std::vector<const PairRecord*>& items,
                          const ContrastiveCtx& ctx, uint64_t seed_a,
                          uint64_t seed_b) {
  Graph g;
  const EncoderNodes nodes = bind_encoder(g, code_encoder, false);
  const Graph::Id loss = loss_code_modality_node(g, nodes, code_encoder, items,
                                                 ctx, seed_a, seed_b);
  return g.value(loss).scalar_value();
}

double loss_query_modality(const EncoderModel& query_encoder,
                           const std::vector<const PairRecord*>& items,
                           const ContrastiveCtx& ctx, uint64_t seed_a,
                           uint64_t seed_b) {
  Graph g;
  const EncoderNodes nodes = bind_encoder(g, query_encoder, false);
  const Graph::Id loss = loss_query_modality_node(g, nodes, query_encoder,
                                                  items, ctx, seed_a, seed_b);
  return g.value(loss).scalar_value();
}

double loss_cross_modality(const EncoderModel& query_encoder,
                           const EncoderModel& code_encoder,
                           const std::vector<const PairRecord*>& items,
                           const ContrastiveCtx& ctx) {
  Graph g;
  const EncoderNodes qn = bind_encoder(g, query_encoder, false);
  const EncoderNodes cn = bind_encoder(g, code_encoder, false);
  const EncodedBatch codes = encode_batch_node(
      g, cn, code_encoder, items, Modality::kCode, EncodeCtx::infer(),
      ctx.max_len);
  const EncodedBatch queries = encode_batch_node(
      g, qn, query_encoder, items, Modality::kQuery, EncodeCtx::infer(),
      ctx.max_len);
  return g.value(loss_cross_modality_node(g, codes, queries, ctx))
      .scalar_value();
}

Graph::Id cross_entropy_node(Graph& g, std::span<const Graph::Id> y_hat,
                             const std::vector<double>& labels) {
  if (y_hat.size() != labels.size() || y_hat.empty())
    throw ContractError("cross entropy: predictions and labels disagree");
  for (double y : labels)
    if (y != 0.0 && y != 1.0)
      throw DataError("cross entropy: label " + std::to_string(y) +
                      " is not 0 or 1");
  Graph::Id preds = g.concat_rows(y_hat);
  Graph::Id clamped = g.clamp(preds, kBceEps, 1.0 - kBceEps);
  Graph::Id log_p = g.log(clamped);
  Graph::Id ones = g.constant(Tensor::full(g.value(clamped).shape(), 1.0));
  Graph::Id log_not_p = g.log(g.add(ones, g.scale(clamped, -1.0)));

  std::vector<double> y_neg(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) y_neg[i] = 1.0 - labels[i];
  Graph::Id y_const = g.constant(Tensor::vec(std::vector<double>(labels)));
  Graph::Id y_neg_const = g.constant(Tensor::vec(std::move(y_neg)));
  Graph::Id pos_term = g.dot(y_const, log_p);
  Graph::Id neg_term = g.dot(y_neg_const, log_not_p);
  return g.scale(g.add(pos_term, neg_term), -1.0);
}

double loss_cross_encoder(std::span<const double> y_hat,
                          std::span<const double> labels) {
  Graph g;
  std::vector<Graph::Id> nodes;
  nodes.reserve(y_hat.size());
  for (double v : y_hat) nodes.push_back(g.constant(Tensor::scalar(v)));
  const Graph::Id loss =
      cross_entropy_node(g, nodes, {labels.begin(), labels.end()});
  return g.value(loss).scalar_value();
}

std::vector<const PairRecord*> batch_items(const Corpus& corpus,
                                           const Batch& batch) {
  std::vector<const PairRecord*> items;
  items.reserve(batch.indices.size());
  for (size_t i : batch.indices) items.push_back(&corpus[i]);
  return items;
}

}  // namespace spencer
