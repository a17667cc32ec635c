#pragma once

#include <functional>

namespace lcnet {

/// Runs fn(0..n-1) on up to `jobs` worker threads. Work items are handed out
/// from an atomic counter and results must be written to caller-owned slots
/// keyed by index, so outputs are identical whatever the width. jobs <= 1
/// runs inline. The first exception thrown by a worker is rethrown.
void parallel_for(long n, int jobs, const std::function<void(long)>& fn);

}  // namespace lcnet
