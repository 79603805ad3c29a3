#pragma once

#include <cstdint>
#include <vector>

namespace spencer {

// Counter-based generator: the i-th draw is a pure function of (seed, i),
// so masks and shuffles are replayable and order-independent. splitmix64
// finalizer over an affine counter stream.
inline uint64_t counter_hash(uint64_t seed, uint64_t counter) {
  uint64_t z = seed + (counter + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Child stream for (seed, stream-id); used to derive per-epoch, per-pass
// and per-item seeds from one run seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return counter_hash(seed, stream);
}

// Uniform double in [0, 1) from 53 high bits.
inline double unit_double(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return counter_hash(seed_, counter_++); }
  double next_unit() { return unit_double(next_u64()); }

  // Uniform in [0, n). Fixed-point multiply keeps the mapping identical
  // across platforms.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  double next_normal();

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// Seeded Fisher-Yates.
void shuffle_indices(std::vector<size_t>& indices, CounterRng& rng);
std::vector<size_t> shuffled_range(size_t n, uint64_t seed);

}  // namespace spencer
