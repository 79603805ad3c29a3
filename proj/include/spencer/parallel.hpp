#pragma once

#include <cstddef>
#include <functional>

namespace spencer {

// Runs fn(i) for i in [0, count) over at most `threads` workers. Results
// must be written to preassigned slots so the outcome does not depend on
// scheduling. threads <= 1 runs inline.
void parallel_for(size_t count, size_t threads,
                  const std::function<void(size_t)>& fn);

}  // namespace spencer
