// Compares the OpenMP kernels against the serial reference implementation.
// Prints wall time per call and verifies the two agree bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "bb/kernels.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = clock_type::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = clock_type::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

int main() {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  auto fill = [&](std::vector<double>& v) {
    for (double& x : v) x = ud(rng);
  };

  std::printf("%-28s %12s %12s %8s  %s\n", "kernel", "serial ms", "parallel ms", "speedup",
              "match");

  {
    const std::size_t m = 256, n = 256, k = 256;
    std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
    fill(a);
    fill(b);
    const double ts = time_ms(
        [&] { bb::kernels::gemm_serial(false, false, m, n, k, a.data(), b.data(), c1.data(), false); },
        5);
    const double tp = time_ms(
        [&] { bb::kernels::gemm(false, false, m, n, k, a.data(), b.data(), c2.data(), false); }, 5);
    std::printf("%-28s %12.3f %12.3f %7.2fx  %s\n", "gemm 256x256x256", ts, tp, ts / tp,
                identical(c1, c2) ? "yes" : "NO");
  }

  {
    bb::kernels::Conv2dDims d = bb::kernels::conv2d_dims(8, 16, 28, 28, 32, 5, 5, 1, 2);
    std::vector<double> x(8 * 16 * 28 * 28), w(32 * 16 * 5 * 5);
    const std::size_t out_elems = d.n * d.co * d.oh * d.ow;
    std::vector<double> y1(out_elems), y2(out_elems);
    fill(x);
    fill(w);
    const double ts =
        time_ms([&] { bb::kernels::conv2d_forward_serial(d, x.data(), w.data(), y1.data()); }, 3);
    const double tp =
        time_ms([&] { bb::kernels::conv2d_forward(d, x.data(), w.data(), y2.data()); }, 3);
    std::printf("%-28s %12.3f %12.3f %7.2fx  %s\n", "conv2d 8x16x28x28 k5", ts, tp, ts / tp,
                identical(y1, y2) ? "yes" : "NO");
  }

  return 0;
}
