#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spencer {

// Every tunable of the toolchain, defaulted to the reference configuration
// (batch 16, lr 1e-5, dropout 0.2, max_len 512, layer drop 3, threshold
// 0.01, pool 1000, recall k 5). A JSON config file overrides defaults;
// command-line flags override the file.
struct RunConfig {
  // model
  uint32_t vocab_buckets = 8192;
  size_t dim = 64;
  size_t hidden = 0;  // 0 -> 4 * dim
  size_t layers = 12;
  size_t cross_layers = 4;
  size_t max_len = 512;

  // training
  size_t batch_size = 16;
  double temperature = 0.05;
  double learning_rate = 1e-5;
  size_t epochs = 8;
  double dropout = 0.2;
  size_t patience = 3;
  std::string loss_form = "exclusive";  // or "inclusive"
  double weight_decay = 0.01;

  // distillation
  size_t layer_drop = 3;
  double drop_threshold = 0.01;
  size_t min_layers = 1;
  size_t distill_epochs = 3;
  double distill_learning_rate = 1e-5;
  std::string distill_variant = "base";  // or "contrastive"

  // retrieval / evaluation
  size_t recall_k = 5;
  size_t pool_size = 1000;
  std::vector<size_t> k_values = {1, 3, 5, 10};
  size_t timing_repeats = 5;
  size_t bench_queries = 1000;
  std::string eval_mode = "two-stage";  // or "dual"
  std::string eval_split = "test";      // "train", "valid", "test" or "all"

  // data
  double split_train = 0.7;
  double split_valid = 0.15;
  double split_test = 0.15;
  size_t corpus_count = 2000;
  size_t corpus_vocab = 1000;
  size_t code_len_min = 6;
  size_t code_len_max = 12;
  size_t query_len_min = 4;
  size_t query_len_max = 8;
  double noise = 0.2;

  // run
  uint64_t seed = 42;
  size_t threads = 1;
  std::string data_path = "data/corpus.jsonl";
  std::string checkpoint_dir = "checkpoints";
  std::string index_path = "index/code.spix";
  std::string report_dir = "reports";
};

// Applies a JSON object over cfg. Unknown keys and type mismatches are
// rejected by name.
void apply_config_json(RunConfig& cfg, const std::string& json_text);

// Defaults overridden by the file's values, then validated.
RunConfig parse_config_file(const std::string& path);

// Range checks; throws ParameterError naming the offending key.
void validate_config(const RunConfig& cfg);

std::string config_to_json(const RunConfig& cfg);

}  // namespace spencer
