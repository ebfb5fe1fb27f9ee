#pragma once

#include <functional>

namespace sffn {

// Worker cap for data-parallel loops. Resolved once from the SFFN_THREADS
// environment variable; defaults to 1 so results are reproducible out of the
// box. Parallel loops in this library only ever split work across outputs
// whose inner accumulation order is fixed, so any thread count yields
// bit-identical results.
int max_threads();

// Override the cap programmatically (takes precedence over the environment).
void set_max_threads(int n);

// Runs fn(begin, end) over disjoint sub-ranges of [begin, end), possibly on
// several threads. cost_hint approximates total scalar operations; small
// loops stay on the calling thread.
void parallel_for(int begin, int end, long cost_hint,
                  const std::function<void(int, int)>& fn);

}  // namespace sffn
