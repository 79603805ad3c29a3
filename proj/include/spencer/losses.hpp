#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spencer/data.hpp"
#include "spencer/encoder.hpp"
#include "spencer/graph.hpp"

namespace spencer {

struct ContrastiveCtx {
  double tau = 0.05;
  LossForm form = LossForm::kExclusive;
  size_t max_len = 512;
};

// Value-only form of the batched contrastive objective. pos holds the n
// positive similarities, sims the n x n similarity matrix whose diagonal
// corresponds to the matched pairs.
double contrastive_core(const Tensor& pos, const Tensor& sims, double tau,
                        LossForm form);

// One modality of a batch encoded twice (or once), as graph nodes.
struct EncodedBatch {
  std::vector<Graph::Id> rows;  // unit [1 x d] nodes
  Graph::Id matrix = 0;         // [n x d]
};

enum class Modality { kCode, kQuery };

EncodedBatch encode_batch_node(Graph& g, const EncoderNodes& nodes,
                               const EncoderModel& model,
                               const std::vector<const PairRecord*>& items,
                               Modality modality, const EncodeCtx& ctx,
                               size_t max_len);

// Contrastive loss between two encoded views: positives are the per-index
// cosines, negatives the cross pairs of `anchor` row i with `other` row j.
Graph::Id contrastive_pair_loss_node(Graph& g, const EncodedBatch& anchor,
                                     const EncodedBatch& other, double tau,
                                     LossForm form);

// Same-modality loss over two dropout views of the codes.
Graph::Id loss_code_modality_node(Graph& g, const EncoderNodes& code_nodes,
                                  const EncoderModel& code_encoder,
                                  const std::vector<const PairRecord*>& items,
                                  const ContrastiveCtx& ctx, uint64_t seed_a,
                                  uint64_t seed_b);

// Same-modality loss over two dropout views of the queries.
Graph::Id loss_query_modality_node(Graph& g, const EncoderNodes& query_nodes,
                                   const EncoderModel& query_encoder,
                                   const std::vector<const PairRecord*>& items,
                                   const ContrastiveCtx& ctx, uint64_t seed_a,
                                   uint64_t seed_b);

// Cross-modality loss pairing each code with its own query against the
// other queries in the batch.
Graph::Id loss_cross_modality_node(Graph& g, const EncodedBatch& codes,
                                   const EncodedBatch& queries,
                                   const ContrastiveCtx& ctx);

// Value-only conveniences; the same graph construction evaluated once.
double loss_code_modality(const EncoderModel& code_encoder,
                          const std::vector<const PairRecord*>& items,
                          const ContrastiveCtx& ctx, uint64_t seed_a,
                          uint64_t seed_b);
double loss_query_modality(const EncoderModel& query_encoder,
                           const std::vector<const PairRecord*>& items,
                           const ContrastiveCtx& ctx, uint64_t seed_a,
                           uint64_t seed_b);
// Inference-mode encodings on both sides.
double loss_cross_modality(const EncoderModel& query_encoder,
                           const EncoderModel& code_encoder,
                           const std::vector<const PairRecord*>& items,
                           const ContrastiveCtx& ctx);

// Binary cross entropy over match probabilities, with predictions clamped
// to [eps, 1 - eps]. Labels must be 0 or 1.
inline constexpr double kBceEps = 1e-7;
Graph::Id cross_entropy_node(Graph& g, std::span<const Graph::Id> y_hat,
                             const std::vector<double>& labels);
double loss_cross_encoder(std::span<const double> y_hat,
                          std::span<const double> labels);

// Helpers shared with the training loops.
std::vector<const PairRecord*> batch_items(const Corpus& corpus,
                                           const Batch& batch);

}  // namespace spencer
