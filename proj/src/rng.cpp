#include "spencer/rng.hpp"

#include <cmath>

namespace spencer {

double CounterRng::next_normal() {
  // Box-Muller; clamp away from zero so log stays finite.
  double u1 = next_unit();
  double u2 = next_unit();
  if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void shuffle_indices(std::vector<size_t>& indices, CounterRng& rng) {
  if (indices.empty()) return;
  for (size_t i = indices.size() - 1; i > 0; --i) {
    const size_t j = static_cast<size_t>(rng.next_below(i + 1));
    std::swap(indices[i], indices[j]);
  }
}

std::vector<size_t> shuffled_range(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  CounterRng rng(seed);
  shuffle_indices(idx, rng);
  return idx;
}

}  // namespace spencer
