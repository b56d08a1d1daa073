// Compares the tuned parallel matmul kernels against the serial reference:
// throughput side by side plus a bit-identity check on every shape.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "repcount/kernels.hpp"
#include "repcount/rng.hpp"
#include "repcount/threads.hpp"

using namespace repcount;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

using Fn = void (*)(const double*, const double*, double*, int, int, int);

struct Variant {
  const char* name;
  Fn tuned;
  Fn reference;
};

void fill(std::vector<double>& v, SplitMix64& rng) {
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
}

void bench_shape(const Variant& var, int m, int k, int n) {
  SplitMix64 rng(42);
  std::vector<double> a(static_cast<size_t>(m) * k), b, c_ref, c_tuned;
  // nt consumes B as [n×k], tn consumes A as [k×m]; sizes below cover all
  b.resize(static_cast<size_t>(k) * n);
  c_ref.assign(static_cast<size_t>(m) * n, 0.0);
  c_tuned.assign(static_cast<size_t>(m) * n, 0.0);
  fill(a, rng);
  fill(b, rng);

  const double flops = 2.0 * m * k * n;
  auto time_one = [&](Fn fn, std::vector<double>& c) {
    // warm up once, then enough repetitions for ≥ 0.2 s of work
    fn(a.data(), b.data(), c.data(), m, k, n);
    int reps = std::max(1, static_cast<int>(2e8 / flops));
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) fn(a.data(), b.data(), c.data(), m, k, n);
    return flops * reps / seconds_since(t0) / 1e9;
  };

  const double gf_ref = time_one(var.reference, c_ref);
  const double gf_tuned = time_one(var.tuned, c_tuned);
  double maxdiff = 0.0;
  for (size_t i = 0; i < c_ref.size(); ++i)
    maxdiff = std::max(maxdiff, std::abs(c_ref[i] - c_tuned[i]));
  std::printf("%-9s %4dx%4dx%4d   ref %7.2f GF/s   tuned %7.2f GF/s   x%5.1f   maxdiff %g\n",
              var.name, m, k, n, gf_ref, gf_tuned, gf_tuned / gf_ref, maxdiff);
}

}  // namespace

int main() {
  init_threads();
  std::printf("threads: %d\n", thread_count());

  const Variant variants[] = {
      {"matmul", kernels::matmul, kernels::ref::matmul},
      {"matmul_nt", kernels::matmul_nt, kernels::ref::matmul_nt},
      {"matmul_tn", kernels::matmul_tn, kernels::ref::matmul_tn},
  };
  const int shapes[][3] = {
      {64, 64, 64}, {64, 512, 512}, {128, 512, 512}, {512, 512, 512}, {61, 510, 500},
  };
  for (const Variant& v : variants)
    for (const auto& s : shapes) bench_shape(v, s[0], s[1], s[2]);
  return 0;
}
