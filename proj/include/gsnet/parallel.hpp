#pragma once

#include <cstdint>
#include <functional>

namespace gsnet {

/// Worker count: GSNET_THREADS if set (>=1), otherwise hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [begin, end). Each index is handled by exactly one
/// worker, so results are independent of the thread count as long as fn
/// writes only to locations owned by i.
void parallel_for(std::int64_t begin, std::int64_t end, const std::function<void(std::int64_t)>& fn);

}  // namespace gsnet
