#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "spencer/graph.hpp"
#include "spencer/tensor.hpp"
#include "spencer/tokenizer.hpp"

namespace spencer {

// Unit-norm representation vector.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(Tensor values);

  const Tensor& values() const { return values_; }
  size_t dim() const { return values_.numel(); }

 private:
  Tensor values_;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// One residual mixing block: each position is updated from itself and the
// row-mean context of all positions.
struct MixingBlock {
  Tensor w1;  // [2d x h]
  Tensor b1;  // [1 x h]
  Tensor w2;  // [h x d]
  Tensor b2;  // [1 x d]
};

struct ScoreHead {
  Tensor w;  // [d]
  Tensor b;  // [1]
};

struct EncoderConfig {
  uint32_t vocab_buckets = 8192;
  size_t dim = 64;
  size_t hidden = 0;  // 0 -> 4 * dim
  size_t layers = 12;
  double dropout = 0.2;
  bool score_head = false;
  uint64_t seed = 1;
};

// Embedding table plus an ordered stack of residual mixing blocks with CLS
// pooling. Dual encoders carry no score head; cross encoders do.
struct EncoderModel {
  uint32_t vocab_buckets = 0;
  size_t dim = 0;
  size_t hidden = 0;
  double dropout_rate = 0.2;
  Tensor embedding;  // [V x d]
  std::vector<MixingBlock> blocks;
  std::optional<ScoreHead> score_head;

  size_t layer_count() const { return blocks.size(); }
  bool has_score_head() const { return score_head.has_value(); }
  Vocabulary vocabulary() const { return Vocabulary(vocab_buckets); }

  // Parameter tensors in declaration order: embedding, then w1/b1/w2/b2 per
  // block, then the score head. This order is the checkpoint layout and the
  // optimizer-state alignment.
  std::vector<Tensor*> param_tensors();
  std::vector<const Tensor*> param_tensors() const;
};

EncoderModel make_encoder(const EncoderConfig& cfg);

enum class EncodeMode { kInfer, kTrain };

struct EncodeCtx {
  EncodeMode mode = EncodeMode::kInfer;
  uint64_t seed = 0;  // dropout stream, used in train mode

  static EncodeCtx infer() { return {EncodeMode::kInfer, 0}; }
  static EncodeCtx train(uint64_t seed) { return {EncodeMode::kTrain, seed}; }
};

// Graph-side parameter handles for one encoder, so several encode passes in
// one graph share the same parameter nodes.
struct EncoderNodes {
  Graph::Id embedding = 0;
  struct BlockNodes {
    Graph::Id w1, b1, w2, b2;
  };
  std::vector<BlockNodes> blocks;
  Graph::Id head_w = 0;
  Graph::Id head_b = 0;
  bool has_head = false;
};

EncoderNodes bind_encoder(Graph& g, const EncoderModel& model, bool trainable);

// Runs the block stack over a token sequence and returns the L2-normalized
// CLS row as a [1 x d] node. Train mode inserts dropout nodes seeded from
// ctx.seed; infer mode is deterministic.
Graph::Id encode_node(Graph& g, const EncoderNodes& nodes,
                      const EncoderModel& model, const TokenSequence& seq,
                      const EncodeCtx& ctx);

// Match probability in (0, 1) for a [CLS] code [SEP] query sequence.
Graph::Id score_pair_node(Graph& g, const EncoderNodes& nodes,
                          const EncoderModel& model, const TokenSequence& code,
                          const TokenSequence& query, const EncodeCtx& ctx,
                          size_t max_len);

EmbeddingVector encode(const EncoderModel& model, const TokenSequence& seq,
                       const EncodeCtx& ctx = EncodeCtx::infer());

double score_pair(const EncoderModel& model, const TokenSequence& code,
                  const TokenSequence& query,
                  const EncodeCtx& ctx = EncodeCtx::infer(),
                  size_t max_len = 512);

// Drops the top `drop` blocks, keeping the embedding table and the first
// layer_count - drop blocks bitwise intact.
EncoderModel compress(const EncoderModel& model, size_t drop);

// Combined cross-encoder input: [CLS] code [SEP] query with both sides
// capped at (max_len - 2) / 2 when the pair would overflow max_len.
TokenSequence build_pair_sequence(const TokenSequence& code,
                                  const TokenSequence& query, size_t max_len);

}  // namespace spencer
