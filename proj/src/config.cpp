#include "spencer/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spencer/errors.hpp"

namespace spencer {

namespace {

using nlohmann::json;

template <typename T>
void read_number(const json& v, const char* key, T& out) {
  if (!v.is_number())
    throw ParameterError(std::string("config key \"") + key +
                         "\" expects a number");
  out = v.get<T>();
}

void read_string(const json& v, const char* key, std::string& out) {
  if (!v.is_string())
    throw ParameterError(std::string("config key \"") + key +
                         "\" expects a string");
  out = v.get<std::string>();
}

void read_size_list(const json& v, const char* key, std::vector<size_t>& out) {
  if (!v.is_array())
    throw ParameterError(std::string("config key \"") + key +
                         "\" expects an array of integers");
  out.clear();
  for (const auto& item : v) {
    if (!item.is_number_unsigned() && !item.is_number_integer())
      throw ParameterError(std::string("config key \"") + key +
                           "\" expects an array of integers");
    out.push_back(item.get<size_t>());
  }
}

}  // namespace

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  json obj;
  try {
    obj = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!obj.is_object())
    throw ParameterError("config: top level must be a JSON object");

  for (const auto& [key, value] : obj.items()) {
    if (key == "vocab_buckets") read_number(value, "vocab_buckets", cfg.vocab_buckets);
    else if (key == "dim") read_number(value, "dim", cfg.dim);
    else if (key == "hidden") read_number(value, "hidden", cfg.hidden);
    else if (key == "layers") read_number(value, "layers", cfg.layers);
    else if (key == "cross_layers") read_number(value, "cross_layers", cfg.cross_layers);
    else if (key == "max_len") read_number(value, "max_len", cfg.max_len);
    else if (key == "batch_size") read_number(value, "batch_size", cfg.batch_size);
    else if (key == "temperature") read_number(value, "temperature", cfg.temperature);
    else if (key == "learning_rate") read_number(value, "learning_rate", cfg.learning_rate);
    else if (key == "epochs") read_number(value, "epochs", cfg.epochs);
    else if (key == "dropout") read_number(value, "dropout", cfg.dropout);
    else if (key == "patience") read_number(value, "patience", cfg.patience);
    else if (key == "loss_form") read_string(value, "loss_form", cfg.loss_form);
    else if (key == "weight_decay") read_number(value, "weight_decay", cfg.weight_decay);
    else if (key == "layer_drop") read_number(value, "layer_drop", cfg.layer_drop);
    else if (key == "drop_threshold") read_number(value, "drop_threshold", cfg.drop_threshold);
    else if (key == "min_layers") read_number(value, "min_layers", cfg.min_layers);
    else if (key == "distill_epochs") read_number(value, "distill_epochs", cfg.distill_epochs);
    else if (key == "distill_learning_rate") read_number(value, "distill_learning_rate", cfg.distill_learning_rate);
    else if (key == "distill_variant") read_string(value, "distill_variant", cfg.distill_variant);
    else if (key == "recall_k") read_number(value, "recall_k", cfg.recall_k);
    else if (key == "pool_size") read_number(value, "pool_size", cfg.pool_size);
    else if (key == "k_values") read_size_list(value, "k_values", cfg.k_values);
    else if (key == "timing_repeats") read_number(value, "timing_repeats", cfg.timing_repeats);
    else if (key == "bench_queries") read_number(value, "bench_queries", cfg.bench_queries);
    else if (key == "eval_mode") read_string(value, "eval_mode", cfg.eval_mode);
    else if (key == "eval_split") read_string(value, "eval_split", cfg.eval_split);
    else if (key == "split_train") read_number(value, "split_train", cfg.split_train);
    else if (key == "split_valid") read_number(value, "split_valid", cfg.split_valid);
    else if (key == "split_test") read_number(value, "split_test", cfg.split_test);
    else if (key == "corpus_count") read_number(value, "corpus_count", cfg.corpus_count);
    else if (key == "corpus_vocab") read_number(value, "corpus_vocab", cfg.corpus_vocab);
    else if (key == "code_len_min") read_number(value, "code_len_min", cfg.code_len_min);
    else if (key == "code_len_max") read_number(value, "code_len_max", cfg.code_len_max);
    else if (key == "query_len_min") read_number(value, "query_len_min", cfg.query_len_min);
    else if (key == "query_len_max") read_number(value, "query_len_max", cfg.query_len_max);
    else if (key == "noise") read_number(value, "noise", cfg.noise);
    else if (key == "seed") read_number(value, "seed", cfg.seed);
    else if (key == "threads") read_number(value, "threads", cfg.threads);
    else if (key == "data_path") read_string(value, "data_path", cfg.data_path);
    else if (key == "checkpoint_dir") read_string(value, "checkpoint_dir", cfg.checkpoint_dir);
    else if (key == "index_path") read_string(value, "index_path", cfg.index_path);
    else if (key == "report_dir") read_string(value, "report_dir", cfg.report_dir);
    else
      throw ParameterError("config: unknown key \"" + key + "\"");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_json(cfg, buf.str());
  validate_config(cfg);
  return cfg;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw ParameterError("config: " + what);
  };
  if (cfg.vocab_buckets < 4) fail("vocab_buckets must be at least 4");
  if (cfg.dim < 1) fail("dim must be positive");
  if (cfg.layers < 1) fail("layers must be positive");
  if (cfg.cross_layers < 1) fail("cross_layers must be positive");
  if (cfg.max_len < 2) fail("max_len must be at least 2");
  if (cfg.batch_size < 2) fail("batch_size must be at least 2");
  if (cfg.temperature <= 0.0) fail("temperature must be positive");
  if (cfg.learning_rate < 0.0) fail("learning_rate must be nonnegative");
  if (cfg.epochs < 1) fail("epochs must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) fail("dropout must be in [0, 1)");
  if (cfg.loss_form != "exclusive" && cfg.loss_form != "inclusive")
    fail("loss_form must be \"exclusive\" or \"inclusive\"");
  if (cfg.layer_drop < 1) fail("layer_drop must be positive");
  if (cfg.drop_threshold < 0.0) fail("drop_threshold must be nonnegative");
  if (cfg.min_layers < 1) fail("min_layers must be positive");
  if (cfg.distill_epochs < 1) fail("distill_epochs must be positive");
  if (cfg.distill_variant != "base" && cfg.distill_variant != "contrastive")
    fail("distill_variant must be \"base\" or \"contrastive\"");
  if (cfg.recall_k < 1) fail("recall_k must be at least 1");
  if (cfg.pool_size < 2) fail("pool_size must be at least 2");
  for (size_t k : cfg.k_values)
    if (k < 1) fail("k_values entries must be positive");
  if (cfg.timing_repeats < 3) fail("timing_repeats must be at least 3");
  if (cfg.bench_queries < 1) fail("bench_queries must be positive");
  if (cfg.eval_mode != "two-stage" && cfg.eval_mode != "dual")
    fail("eval_mode must be \"two-stage\" or \"dual\"");
  if (cfg.eval_split != "train" && cfg.eval_split != "valid" &&
      cfg.eval_split != "test" && cfg.eval_split != "all")
    fail("eval_split must be train, valid, test or all");
  const double frac_sum = cfg.split_train + cfg.split_valid + cfg.split_test;
  if (cfg.split_train < 0 || cfg.split_valid < 0 || cfg.split_test < 0 ||
      frac_sum < 1.0 - 1e-9 || frac_sum > 1.0 + 1e-9)
    fail("split fractions must be nonnegative and sum to 1");
  if (cfg.corpus_count < 2) fail("corpus_count must be at least 2");
  if (cfg.corpus_vocab < 2) fail("corpus_vocab must be at least 2");
  if (cfg.code_len_min < 1 || cfg.code_len_max < cfg.code_len_min)
    fail("code length range is invalid");
  if (cfg.query_len_min < 1 || cfg.query_len_max < cfg.query_len_min)
    fail("query length range is invalid");
  if (cfg.noise < 0.0 || cfg.noise >= 1.0) fail("noise must be in [0, 1)");
  if (cfg.threads < 1) fail("threads must be at least 1");
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["vocab_buckets"] = cfg.vocab_buckets;
  j["dim"] = cfg.dim;
  j["hidden"] = cfg.hidden;
  j["layers"] = cfg.layers;
  j["cross_layers"] = cfg.cross_layers;
  j["max_len"] = cfg.max_len;
  j["batch_size"] = cfg.batch_size;
  j["temperature"] = cfg.temperature;
  j["learning_rate"] = cfg.learning_rate;
  j["epochs"] = cfg.epochs;
  j["dropout"] = cfg.dropout;
  j["patience"] = cfg.patience;
  j["loss_form"] = cfg.loss_form;
  j["weight_decay"] = cfg.weight_decay;
  j["layer_drop"] = cfg.layer_drop;
  j["drop_threshold"] = cfg.drop_threshold;
  j["min_layers"] = cfg.min_layers;
  j["distill_epochs"] = cfg.distill_epochs;
  j["distill_learning_rate"] = cfg.distill_learning_rate;
  j["distill_variant"] = cfg.distill_variant;
  j["recall_k"] = cfg.recall_k;
  j["pool_size"] = cfg.pool_size;
  j["k_values"] = cfg.k_values;
  j["timing_repeats"] = cfg.timing_repeats;
  j["bench_queries"] = cfg.bench_queries;
  j["eval_mode"] = cfg.eval_mode;
  j["eval_split"] = cfg.eval_split;
  j["split_train"] = cfg.split_train;
  j["split_valid"] = cfg.split_valid;
  j["split_test"] = cfg.split_test;
  j["corpus_count"] = cfg.corpus_count;
  j["corpus_vocab"] = cfg.corpus_vocab;
  j["code_len_min"] = cfg.code_len_min;
  j["code_len_max"] = cfg.code_len_max;
  j["query_len_min"] = cfg.query_len_min;
  j["query_len_max"] = cfg.query_len_max;
  j["noise"] = cfg.noise;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["data_path"] = cfg.data_path;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["index_path"] = cfg.index_path;
  j["report_dir"] = cfg.report_dir;
  return j.dump(2);
}

}  // namespace spencer
