#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "spencer/tensor.hpp"

namespace spencer {

// Denominator convention for the contrastive softmax term. Exclusive omits
// the positive pair from the denominator; inclusive is the usual InfoNCE
// normalization that keeps it.
enum class LossForm { kExclusive, kInclusive };

enum class Op : uint8_t {
  kConstant,
  kParam,
  kMatMul,
  kTranspose,
  kAdd,
  kTanh,
  kSigmoid,
  kLog,
  kAbs,
  kClamp,
  kScale,
  kDropout,
  kConcatRows,
  kConcatCols,
  kRowMean,
  kTakeRow,
  kL2Normalize,
  kCosine,
  kRowwiseDot,
  kDot,
  kSum,
  kEmbed,
  kContrastiveCore,
};

// Append-only reverse-mode tape. Node ids are indices, so inputs always
// precede consumers and the tape is acyclic by construction. Forward values
// are computed eagerly and cached on the node.
class Graph {
 public:
  using Id = uint32_t;
  using GradientMap = std::unordered_map<Id, Tensor>;

  Id constant(Tensor value);
  Id param(Tensor value);  // marked trainable

  Id matmul(Id a, Id b);
  Id transpose(Id a);
  Id add(Id a, Id b);  // equal shapes or bias-row broadcast of b
  Id tanh(Id a);
  Id sigmoid(Id a);
  Id log(Id a);
  Id abs(Id a);
  Id clamp(Id a, double lo, double hi);
  Id scale(Id a, double c);
  Id dropout(Id a, double rate, uint64_t seed);
  Id concat_rows(std::span<const Id> parts);
  Id concat_cols(Id a, Id b);  // b may be a single row, broadcast over a's
  Id row_mean(Id a);           // [n x d] -> [1 x d]
  Id take_row(Id a, size_t row);
  Id l2_normalize(Id a);  // single row or vector -> unit norm
  Id cosine(Id u, Id v);
  Id rowwise_dot(Id a, Id b);  // [n x d], [n x d] -> [n]
  Id dot(Id a, Id b);          // flat dot -> scalar
  Id sum(Id a);                // -> scalar

  // Gather rows of an embedding table; gradients scatter-add back.
  Id embed(Id table, std::vector<uint32_t> token_ids);

  // Batched contrastive objective over a similarity matrix whose diagonal
  // corresponds to the matched pairs. pos holds the positive similarities.
  // Log-sum-exp is max-shifted.
  Id contrastive_core(Id pos, Id sims, double tau, LossForm form);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  size_t node_count() const { return nodes_.size(); }
  const std::vector<Id>& params() const { return params_; }

  // Exact reverse-mode gradients for every registered parameter; parameters
  // the loss never touches get zero tensors. The loss must be scalar.
  GradientMap backward(Id loss) const;

 private:
  struct Node {
    Op op;
    std::vector<Id> inputs;
    Tensor value;
    double p0 = 0.0;  // scale factor / clamp lo / dropout rate / tau
    double p1 = 0.0;  // clamp hi
    uint64_t seed = 0;
    size_t index = 0;
    std::vector<uint32_t> token_ids;
    LossForm form = LossForm::kExclusive;
  };

  Id push(Node node);
  const Node& node(Id id) const { return nodes_[id]; }

  void accumulate(std::vector<Tensor>& grads, std::vector<char>& present,
                  Id id, const Tensor& delta) const;
  void backprop_node(Id id, const Tensor& grad_out,
                     std::vector<Tensor>& grads,
                     std::vector<char>& present) const;

  std::vector<Node> nodes_;
  std::vector<Id> params_;
};

}  // namespace spencer
