#pragma once

#include <functional>

namespace fluoro {

// Worker count: FLUORO_RECON_THREADS when set (minimum 1), else hardware
// concurrency.
int worker_count();

// Runs fn(i) for i in [0, count) across workers. Callers own determinism by
// writing to index-addressed slots only.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace fluoro
