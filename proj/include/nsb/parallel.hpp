#pragma once

namespace nsb {

// Worker count for internal kernels: NSB_THREADS if set (>= 1), otherwise the
// OpenMP default. Read once per process.
int thread_count();

}  // namespace nsb
