#ifndef REPCOUNT_THREADS_HPP
#define REPCOUNT_THREADS_HPP

namespace repcount {

// Worker count for all parallel regions: REPCOUNT_THREADS if set (≥1),
// otherwise the OpenMP default. Always 1 when built without OpenMP.
int thread_count();

// Disables nested parallelism so outer loops (batch members, ablation
// cells) own the threads and inner kernels degrade to serial. Called once,
// lazily, by thread_count().
void init_threads();

}  // namespace repcount

#endif
