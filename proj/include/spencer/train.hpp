#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spencer/data.hpp"
#include "spencer/encoder.hpp"
#include "spencer/graph.hpp"

namespace spencer {

struct TrainConfig {
  size_t batch_size = 16;
  double temperature = 0.05;
  double learning_rate = 1e-5;
  size_t epochs = 8;
  double dropout = 0.2;
  size_t patience = 3;  // 0 disables early stopping
  uint64_t seed = 42;
  LossForm loss_form = LossForm::kExclusive;
  double weight_decay = 0.01;
  size_t max_len = 512;
  size_t val_pool_size = 100;
};

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_metric;
  double wall_ms = 0.0;
};

using History = std::vector<EpochRecord>;

std::string history_to_jsonl(const History& history);
void write_history_jsonl(const History& history, const std::string& path);

struct DualTrainResult {
  EncoderModel query;
  EncoderModel code;
  History history;
};

// Joint dual-encoder training: per batch, the same-modality losses over two
// dropout views of codes and of queries plus the cross-modality loss, all
// against in-batch negatives. Validation MRR (recall-only pooled search on
// the validation split) decides early stopping; with patience > 0 the
// best-validation snapshot is returned.
DualTrainResult train_dual(const Corpus& train_data, const Corpus& valid_data,
                           EncoderModel query_encoder,
                           EncoderModel code_encoder, const TrainConfig& cfg);

struct CrossTrainResult {
  EncoderModel model;
  History history;
};

// Cross-encoder training on binary match labels. Each positive pair is
// joined by one synthesized negative: its query paired with a random
// non-matching in-batch code. Early stopping tracks validation pair
// accuracy.
CrossTrainResult train_cross(const Corpus& train_data,
                             const Corpus& valid_data,
                             EncoderModel cross_encoder,
                             const TrainConfig& cfg);

}  // namespace spencer
