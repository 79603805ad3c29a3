#include "spencer/encoder.hpp"

#include <cmath>

#include "spencer/errors.hpp"
#include "spencer/rng.hpp"

namespace spencer {

namespace {

constexpr double kUnitNormTol = 1e-9;

Tensor normal_tensor(std::vector<size_t> shape, double stddev,
                     CounterRng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values_mut()) v = stddev * rng.next_normal();
  return t;
}

}  // namespace

EmbeddingVector::EmbeddingVector(Tensor values) : values_(std::move(values)) {
  if (values_.rank() == 2 && values_.rows() == 1)
    values_ = Tensor::vec({values_.data(), values_.data() + values_.numel()});
  if (values_.rank() != 1)
    throw DimensionError("embedding vector must be rank 1, got " +
                         shape_str(values_));
  const double norm = l2_norm(values_);
  if (std::fabs(norm - 1.0) > kUnitNormTol)
    throw ContractError("embedding vector norm " + std::to_string(norm) +
                        " is not 1");
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine(a.values(), b.values());
}

std::vector<Tensor*> EncoderModel::param_tensors() {
  std::vector<Tensor*> out;
  out.push_back(&embedding);
  for (MixingBlock& blk : blocks) {
    out.push_back(&blk.w1);
    out.push_back(&blk.b1);
    out.push_back(&blk.w2);
    out.push_back(&blk.b2);
  }
  if (score_head) {
    out.push_back(&score_head->w);
    out.push_back(&score_head->b);
  }
  return out;
}

std::vector<const Tensor*> EncoderModel::param_tensors() const {
  auto mutable_list = const_cast<EncoderModel*>(this)->param_tensors();
  return {mutable_list.begin(), mutable_list.end()};
}

EncoderModel make_encoder(const EncoderConfig& cfg) {
  if (cfg.layers < 1) throw ParameterError("encoder needs at least 1 block");
  if (cfg.dim < 1) throw ParameterError("encoder dimension must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    throw ParameterError("encoder dropout must be in [0, 1)");
  EncoderModel m;
  m.vocab_buckets = Vocabulary(cfg.vocab_buckets).size;
  m.dim = cfg.dim;
  m.hidden = cfg.hidden == 0 ? 4 * cfg.dim : cfg.hidden;
  m.dropout_rate = cfg.dropout;

  CounterRng rng(derive_seed(cfg.seed, 0x5e3dULL));
  m.embedding = normal_tensor({m.vocab_buckets, m.dim}, 0.1, rng);

  // Residual-friendly init: the block output projection starts small so the
  // stack is near-identity and deep models stay trainable from scratch.
  const double s1 = std::sqrt(2.0 / static_cast<double>(2 * m.dim + m.hidden));
  const double s2 = std::sqrt(2.0 / static_cast<double>(m.hidden + m.dim)) /
                    std::sqrt(2.0 * static_cast<double>(cfg.layers));
  m.blocks.reserve(cfg.layers);
  for (size_t i = 0; i < cfg.layers; ++i) {
    MixingBlock blk;
    blk.w1 = normal_tensor({2 * m.dim, m.hidden}, s1, rng);
    blk.b1 = Tensor({1, m.hidden});
    blk.w2 = normal_tensor({m.hidden, m.dim}, s2, rng);
    blk.b2 = Tensor({1, m.dim});
    m.blocks.push_back(std::move(blk));
  }
  if (cfg.score_head) {
    ScoreHead head;
    head.w = normal_tensor({m.dim}, std::sqrt(1.0 / m.dim), rng);
    head.b = Tensor({1});
    m.score_head = std::move(head);
  }
  return m;
}

EncoderNodes bind_encoder(Graph& g, const EncoderModel& model,
                          bool trainable) {
  auto insert = [&](const Tensor& t) {
    return trainable ? g.param(t) : g.constant(t);
  };
  EncoderNodes nodes;
  nodes.embedding = insert(model.embedding);
  nodes.blocks.reserve(model.blocks.size());
  for (const MixingBlock& blk : model.blocks)
    nodes.blocks.push_back({insert(blk.w1), insert(blk.b1), insert(blk.w2),
                            insert(blk.b2)});
  if (model.score_head) {
    nodes.head_w = insert(model.score_head->w);
    nodes.head_b = insert(model.score_head->b);
    nodes.has_head = true;
  }
  return nodes;
}

namespace {

// Shared stack walk; returns the final hidden states [s x d].
Graph::Id run_blocks(Graph& g, const EncoderNodes& nodes,
                     const EncoderModel& model, const TokenSequence& seq,
                     const EncodeCtx& ctx) {
  if (seq.ids.empty() || seq.ids[0] != Vocabulary::kCls)
    throw ContractError("encode: sequence must start with CLS");
  Graph::Id x = g.embed(nodes.embedding, seq.ids);
  for (size_t i = 0; i < nodes.blocks.size(); ++i) {
    const EncoderNodes::BlockNodes& blk = nodes.blocks[i];
    Graph::Id context = g.row_mean(x);
    Graph::Id mixed = g.concat_cols(x, context);
    Graph::Id hidden = g.tanh(g.add(g.matmul(mixed, blk.w1), blk.b1));
    Graph::Id update = g.add(g.matmul(hidden, blk.w2), blk.b2);
    if (ctx.mode == EncodeMode::kTrain && model.dropout_rate > 0.0)
      update = g.dropout(update, model.dropout_rate,
                         derive_seed(ctx.seed, i + 1));
    x = g.add(x, update);
  }
  return x;
}

}  // namespace

Graph::Id encode_node(Graph& g, const EncoderNodes& nodes,
                      const EncoderModel& model, const TokenSequence& seq,
                      const EncodeCtx& ctx) {
  if (nodes.has_head)
    throw ContractError(
        "encode: model has a score head; use score_pair for cross encoders");
  Graph::Id x = run_blocks(g, nodes, model, seq, ctx);
  return g.l2_normalize(g.take_row(x, 0));
}

Graph::Id score_pair_node(Graph& g, const EncoderNodes& nodes,
                          const EncoderModel& model, const TokenSequence& code,
                          const TokenSequence& query, const EncodeCtx& ctx,
                          size_t max_len) {
  if (!nodes.has_head)
    throw ContractError("score_pair: model has no score head");
  const TokenSequence joint = build_pair_sequence(code, query, max_len);
  Graph::Id x = run_blocks(g, nodes, model, joint, ctx);
  Graph::Id cls = g.take_row(x, 0);
  Graph::Id logit = g.add(g.dot(nodes.head_w, cls), nodes.head_b);
  return g.sigmoid(logit);
}

EmbeddingVector encode(const EncoderModel& model, const TokenSequence& seq,
                       const EncodeCtx& ctx) {
  Graph g;
  EncoderNodes nodes = bind_encoder(g, model, /*trainable=*/false);
  Graph::Id out = encode_node(g, nodes, model, seq, ctx);
  return EmbeddingVector(g.value(out));
}

double score_pair(const EncoderModel& model, const TokenSequence& code,
                  const TokenSequence& query, const EncodeCtx& ctx,
                  size_t max_len) {
  Graph g;
  EncoderNodes nodes = bind_encoder(g, model, /*trainable=*/false);
  Graph::Id out = score_pair_node(g, nodes, model, code, query, ctx, max_len);
  return g.value(out).scalar_value();
}

TokenSequence build_pair_sequence(const TokenSequence& code,
                                  const TokenSequence& query, size_t max_len) {
  if (max_len < 2)
    throw ParameterError("score_pair: max_len must allow CLS and SEP");
  // Strip the leading CLS each side carries from tokenize().
  size_t code_len = code.ids.empty() ? 0 : code.ids.size() - 1;
  size_t query_len = query.ids.empty() ? 0 : query.ids.size() - 1;
  if (2 + code_len + query_len > max_len) {
    const size_t side_cap = (max_len - 2) / 2;
    code_len = std::min(code_len, side_cap);
    query_len = std::min(query_len, side_cap);
  }
  TokenSequence joint;
  joint.ids.reserve(2 + code_len + query_len);
  joint.ids.push_back(Vocabulary::kCls);
  for (size_t i = 0; i < code_len; ++i) joint.ids.push_back(code.ids[i + 1]);
  joint.ids.push_back(Vocabulary::kSep);
  for (size_t i = 0; i < query_len; ++i) joint.ids.push_back(query.ids[i + 1]);
  return joint;
}

EncoderModel compress(const EncoderModel& model, size_t drop) {
  if (drop < 1 || drop >= model.layer_count())
    throw ContractError("compress: cannot drop " + std::to_string(drop) +
                        " of " + std::to_string(model.layer_count()) +
                        " blocks");
  EncoderModel out;
  out.vocab_buckets = model.vocab_buckets;
  out.dim = model.dim;
  out.hidden = model.hidden;
  out.dropout_rate = model.dropout_rate;
  out.embedding = model.embedding;
  out.blocks.assign(model.blocks.begin(),
                    model.blocks.begin() +
                        static_cast<long>(model.layer_count() - drop));
  out.score_head = model.score_head;
  return out;
}

}  // namespace spencer
