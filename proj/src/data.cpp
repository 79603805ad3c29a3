#include "spencer/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "spencer/errors.hpp"
#include "spencer/rng.hpp"

namespace spencer {

namespace {

using nlohmann::json;

std::string fetch_string(const json& obj, const char* field, size_t line) {
  if (!obj.contains(field))
    throw DataError("jsonl line " + std::to_string(line) +
                    ": missing field \"" + field + "\"");
  if (!obj[field].is_string())
    throw DataError("jsonl line " + std::to_string(line) + ": field \"" +
                    field + "\" must be a string");
  return obj[field].get<std::string>();
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("jsonl: cannot open " + path);
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("jsonl line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (!obj.is_object())
      throw DataError("jsonl line " + std::to_string(line_no) +
                      ": expected an object");
    PairRecord rec;
    rec.id = fetch_string(obj, "id", line_no);
    rec.query = fetch_string(obj, "query", line_no);
    rec.code = fetch_string(obj, "code", line_no);
    if (rec.id.empty() || rec.query.empty() || rec.code.empty())
      throw DataError("jsonl line " + std::to_string(line_no) +
                      ": id, query and code must be nonempty");
    if (!seen.insert(rec.id).second)
      throw DataError("jsonl line " + std::to_string(line_no) +
                      ": duplicate id \"" + rec.id + "\"");
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("jsonl: cannot open " + path + " for writing");
  for (const PairRecord& rec : corpus) {
    json obj = {{"id", rec.id}, {"query", rec.query}, {"code", rec.code}};
    out << obj.dump() << '\n';
  }
  if (!out) throw FileError("jsonl: write to " + path + " failed");
}

SplitResult split(const Corpus& corpus, const SplitFractions& f,
                  uint64_t seed) {
  if (f.train < 0 || f.valid < 0 || f.test < 0 ||
      std::fabs(f.train + f.valid + f.test - 1.0) > 1e-9)
    throw ParameterError("split: fractions must be nonnegative and sum to 1");
  const std::vector<size_t> order = shuffled_range(corpus.size(), seed);
  const size_t n = corpus.size();
  size_t cut1 = static_cast<size_t>(std::llround(f.train * double(n)));
  size_t cut2 =
      static_cast<size_t>(std::llround((f.train + f.valid) * double(n)));
  cut1 = std::min(cut1, n);
  cut2 = std::min(std::max(cut2, cut1), n);
  SplitResult out;
  for (size_t i = 0; i < n; ++i) {
    const PairRecord& rec = corpus[order[i]];
    if (i < cut1)
      out.train.push_back(rec);
    else if (i < cut2)
      out.valid.push_back(rec);
    else
      out.test.push_back(rec);
  }
  return out;
}

std::vector<Batch> make_batches(size_t corpus_size, size_t batch_size,
                                uint64_t seed) {
  if (batch_size < 2)
    throw ParameterError("batches: size must be >= 2 for in-batch negatives");
  const std::vector<size_t> order = shuffled_range(corpus_size, seed);
  std::vector<Batch> out;
  for (size_t start = 0; start < corpus_size; start += batch_size) {
    const size_t end = std::min(start + batch_size, corpus_size);
    if (end - start < 2) break;  // no negatives in a singleton
    Batch b;
    b.indices.assign(order.begin() + long(start), order.begin() + long(end));
    out.push_back(std::move(b));
  }
  return out;
}

std::string synthetic_code_token(size_t i) {
  return "c" + std::to_string(i);
}

std::string synthetic_query_token(size_t i) {
  return "q" + std::to_string(i);
}

Corpus synthesize(const SyntheticSpec& spec) {
  if (spec.count < 2) throw ParameterError("synthesize: need at least 2 records");
  if (spec.vocab < 2) throw ParameterError("synthesize: vocabulary too small");
  if (spec.code_len_min < 1 || spec.code_len_max < spec.code_len_min ||
      spec.query_len_min < 1 || spec.query_len_max < spec.query_len_min)
    throw ParameterError("synthesize: bad length ranges");
  if (spec.noise < 0.0 || spec.noise >= 1.0)
    throw ParameterError("synthesize: noise must be in [0, 1)");

  CounterRng rng(spec.seed);
  Corpus corpus;
  corpus.reserve(spec.count);
  char idbuf[24];
  for (size_t r = 0; r < spec.count; ++r) {
    const size_t code_len =
        spec.code_len_min +
        rng.next_below(spec.code_len_max - spec.code_len_min + 1);
    std::vector<size_t> code_tokens(code_len);
    std::string code;
    for (size_t t = 0; t < code_len; ++t) {
      code_tokens[t] = rng.next_below(spec.vocab);
      if (t) code += ' ';
      code += synthetic_code_token(code_tokens[t]);
    }
    const size_t query_len =
        spec.query_len_min +
        rng.next_below(spec.query_len_max - spec.query_len_min + 1);
    std::string query;
    for (size_t t = 0; t < query_len; ++t) {
      size_t tok = code_tokens[rng.next_below(code_len)];
      if (rng.next_unit() < spec.noise) tok = rng.next_below(spec.vocab);
      if (t) query += ' ';
      query += synthetic_query_token(tok);
    }
    std::snprintf(idbuf, sizeof(idbuf), "rec-%06zu", r);
    corpus.push_back({idbuf, std::move(query), std::move(code)});
  }
  return corpus;
}

}  // namespace spencer
