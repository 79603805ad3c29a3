#include "spencer/tokenizer.hpp"

#include <cctype>

namespace spencer {

namespace {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

uint32_t Vocabulary::token_id(std::string_view token) const {
  const uint64_t span = size - kReserved;
  return kReserved + static_cast<uint32_t>(fnv1a64(token) % span);
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                       size_t max_len) {
  if (max_len < 1) throw ParameterError("tokenize: max_len must be >= 1");
  TokenSequence seq;
  seq.ids.reserve(16);
  seq.ids.push_back(Vocabulary::kCls);
  size_t i = 0;
  while (i < text.size() && seq.ids.size() < max_len) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (i > start)
      seq.ids.push_back(vocab.token_id(text.substr(start, i - start)));
  }
  return seq;
}

}  // namespace spencer
