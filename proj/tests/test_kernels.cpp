#include <doctest.h>

#include <vector>

#include "bb/kernels.hpp"
#include "test_util.hpp"

using namespace bb::kernels;
using bbtest::random_vec;

namespace {

// Naive triple loop, independent of the library kernels.
std::vector<double> naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                               const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        c[i * n + j] += av * bv;
      }
  return c;
}

}  // namespace

TEST_CASE("gemm matches naive for all transpose combinations") {
  const std::size_t m = 7, n = 5, k = 9;
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      const auto a = random_vec(m * k, 100 + ta);
      const auto b = random_vec(k * n, 200 + tb);
      const auto want = naive_gemm(ta, tb, m, n, k, a, b);
      std::vector<double> got(m * n, 0.0);
      gemm(ta, tb, m, n, k, a.data(), b.data(), got.data(), false);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gemm accumulate adds into the output") {
  const std::size_t m = 3, n = 3, k = 3;
  const auto a = random_vec(m * k, 7);
  const auto b = random_vec(k * n, 8);
  std::vector<double> base(m * n, 1.0), out(m * n, 1.0);
  gemm(false, false, m, n, k, a.data(), b.data(), out.data(), true);
  const auto prod = naive_gemm(false, false, m, n, k, a, b);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(base[i] + prod[i]));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  const std::size_t m = 33, n = 29, k = 41;
  const auto a = random_vec(m * k, 9);
  const auto b = random_vec(k * n, 10);
  std::vector<double> c1(m * n), c2(m * n);
  gemm(false, false, m, n, k, a.data(), b.data(), c1.data(), false);
  gemm_serial(false, false, m, n, k, a.data(), b.data(), c2.data(), false);
  CHECK(c1 == c2);

  const Conv2dDims d = conv2d_dims(3, 4, 9, 9, 6, 3, 3, 2, 1);
  const auto x = random_vec(3 * 4 * 9 * 9, 11);
  const auto w = random_vec(6 * 4 * 3 * 3, 12);
  std::vector<double> y1(d.n * d.co * d.oh * d.ow), y2(y1.size());
  conv2d_forward(d, x.data(), w.data(), y1.data());
  conv2d_forward_serial(d, x.data(), w.data(), y2.data());
  CHECK(y1 == y2);
}

TEST_CASE("conv2d forward matches direct summation") {
  // 1x1x3x3, 3x3 kernel, pad 1: hand-check one off-center output.
  const Conv2dDims d = conv2d_dims(1, 1, 3, 3, 1, 3, 3, 1, 1);
  const auto x = random_vec(9, 13);
  const auto w = random_vec(9, 14);
  std::vector<double> y(9);
  conv2d_forward(d, x.data(), w.data(), y.data());
  double center = 0.0;
  for (int fy = 0; fy < 3; ++fy)
    for (int fx = 0; fx < 3; ++fx) center += x[fy * 3 + fx] * w[fy * 3 + fx];
  CHECK(y[4] == doctest::Approx(center));
  double corner = 0.0;  // output (0,0): kernel rows/cols 1..2 overlap
  for (int fy = 1; fy < 3; ++fy)
    for (int fx = 1; fx < 3; ++fx) corner += x[(fy - 1) * 3 + (fx - 1)] * w[fy * 3 + fx];
  CHECK(y[0] == doctest::Approx(corner));
}
