#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spencer/errors.hpp"

namespace spencer {

// Hash-bucket vocabulary. Whitespace-split tokens map to stable ids via
// FNV-1a so tokenization needs no learned vocabulary; ids 0..2 are reserved
// and never produced by hashing.
struct Vocabulary {
  static constexpr uint32_t kCls = 0;
  static constexpr uint32_t kSep = 1;
  static constexpr uint32_t kPad = 2;
  static constexpr uint32_t kReserved = 3;

  uint32_t size = 0;  // bucket count, must exceed the reserved range

  explicit Vocabulary(uint32_t bucket_count) : size(bucket_count) {
    if (size <= kReserved)
      throw ParameterError("vocabulary needs more than " +
                           std::to_string(kReserved) + " buckets");
  }

  uint32_t token_id(std::string_view token) const;
};

struct TokenSequence {
  std::vector<uint32_t> ids;  // position 0 is always CLS

  size_t length() const { return ids.size(); }
};

// CLS-prefixed hashed token sequence, truncated to max_len (CLS plus the
// first max_len - 1 tokens). Empty text yields [CLS] alone.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab,
                       size_t max_len);

}  // namespace spencer
