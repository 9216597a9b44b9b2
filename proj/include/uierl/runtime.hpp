#pragma once

namespace uierl {

// Applies UIERL_NUM_THREADS (if set) to the BLAS pool and returns the worker
// count commands should use. Call once at process start.
int init_runtime();

// Current worker cap (1 if init_runtime has not run).
int num_threads();

} // namespace uierl
