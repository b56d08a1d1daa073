#include "repcount/threads.hpp"

#include <cstdlib>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace repcount {

namespace {
int g_threads = 0;
std::once_flag g_once;

void resolve() {
#ifdef _OPENMP
  omp_set_max_active_levels(1);
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("REPCOUNT_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) n = v;
  }
  g_threads = n < 1 ? 1 : n;
}
}  // namespace

void init_threads() { std::call_once(g_once, resolve); }

int thread_count() {
  init_threads();
  return g_threads;
}

}  // namespace repcount
