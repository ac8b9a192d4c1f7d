#include "bb/kernels.hpp"

#include <stdexcept>

namespace bb::kernels {

namespace {

inline double dot_strided(const double* a, std::size_t sa, const double* b, std::size_t sb,
                          std::size_t k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += a[i * sa] * b[i * sb];
  return acc;
}

template <bool Parallel>
void gemm_impl(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
               const double* a, const double* b, double* c, bool accumulate) {
  // a viewed as m x k (or k x m when transposed), likewise for b.
  const std::size_t a_row = trans_a ? 1 : k;
  const std::size_t a_col = trans_a ? m : 1;
  const std::size_t b_row = trans_b ? 1 : n;
  const std::size_t b_col = trans_b ? k : 1;

  const auto i_end = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (Parallel && m * n * k > 16384)
  for (std::ptrdiff_t i = 0; i < i_end; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * a_row;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = dot_strided(arow, a_col, b + j * b_col, b_row, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  gemm_impl<true>(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool accumulate) {
  gemm_impl<false>(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

Conv2dDims conv2d_dims(std::size_t n, std::size_t ci, std::size_t h, std::size_t w,
                       std::size_t co, std::size_t hf, std::size_t wf, int stride, int pad) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  const std::ptrdiff_t oh = (static_cast<std::ptrdiff_t>(h) + 2 * pad -
                             static_cast<std::ptrdiff_t>(hf)) / stride + 1;
  const std::ptrdiff_t ow = (static_cast<std::ptrdiff_t>(w) + 2 * pad -
                             static_cast<std::ptrdiff_t>(wf)) / stride + 1;
  if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return Conv2dDims{n, ci, h, w, co, hf, wf, stride, pad,
                    static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

namespace {

template <bool Parallel>
void conv2d_forward_impl(const Conv2dDims& d, const double* x, const double* wt, double* y) {
  const std::size_t x_img = d.ci * d.h * d.w;
  const std::size_t w_filt = d.ci * d.hf * d.wf;
  const std::size_t y_img = d.co * d.oh * d.ow;
  const auto total = static_cast<std::ptrdiff_t>(d.n * d.co);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t nc = 0; nc < total; ++nc) {
    const std::size_t img = static_cast<std::size_t>(nc) / d.co;
    const std::size_t oc = static_cast<std::size_t>(nc) % d.co;
    const double* xb = x + img * x_img;
    const double* wf = wt + oc * w_filt;
    double* yb = y + img * y_img + oc * d.oh * d.ow;
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
      for (std::size_t ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ic = 0; ic < d.ci; ++ic) {
          for (std::size_t fy = 0; fy < d.hf; ++fy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * d.stride - d.pad +
                                      static_cast<std::ptrdiff_t>(fy);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t fx = 0; fx < d.wf; ++fx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * d.stride - d.pad +
                                        static_cast<std::ptrdiff_t>(fx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
              acc += xb[(ic * d.h + static_cast<std::size_t>(iy)) * d.w +
                        static_cast<std::size_t>(ix)] *
                     wf[(ic * d.hf + fy) * d.wf + fx];
            }
          }
        }
        yb[oy * d.ow + ox] = acc;
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Conv2dDims& d, const double* x, const double* wt, double* y) {
  conv2d_forward_impl<true>(d, x, wt, y);
}

void conv2d_forward_serial(const Conv2dDims& d, const double* x, const double* wt, double* y) {
  conv2d_forward_impl<false>(d, x, wt, y);
}

void conv2d_backward_input(const Conv2dDims& d, const double* dy, const double* wt, double* dx) {
  const std::size_t x_img = d.ci * d.h * d.w;
  const std::size_t w_filt = d.ci * d.hf * d.wf;
  const std::size_t y_img = d.co * d.oh * d.ow;
  // Gather formulation over input elements; no write races.
  for (std::size_t img = 0; img < d.n; ++img) {
    for (std::size_t oc = 0; oc < d.co; ++oc) {
      const double* dyb = dy + img * y_img + oc * d.oh * d.ow;
      const double* wf = wt + oc * w_filt;
      double* dxb = dx + img * x_img;
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          const double g = dyb[oy * d.ow + ox];
          if (g == 0.0) continue;
          for (std::size_t ic = 0; ic < d.ci; ++ic) {
            for (std::size_t fy = 0; fy < d.hf; ++fy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * d.stride - d.pad +
                                        static_cast<std::ptrdiff_t>(fy);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t fx = 0; fx < d.wf; ++fx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * d.stride - d.pad +
                                          static_cast<std::ptrdiff_t>(fx);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                dxb[(ic * d.h + static_cast<std::size_t>(iy)) * d.w +
                    static_cast<std::size_t>(ix)] += g * wf[(ic * d.hf + fy) * d.wf + fx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const Conv2dDims& d, const double* dy, const double* x, double* dw) {
  const std::size_t x_img = d.ci * d.h * d.w;
  const std::size_t w_filt = d.ci * d.hf * d.wf;
  const std::size_t y_img = d.co * d.oh * d.ow;
  for (std::size_t img = 0; img < d.n; ++img) {
    const double* xb = x + img * x_img;
    for (std::size_t oc = 0; oc < d.co; ++oc) {
      const double* dyb = dy + img * y_img + oc * d.oh * d.ow;
      double* dwf = dw + oc * w_filt;
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          const double g = dyb[oy * d.ow + ox];
          if (g == 0.0) continue;
          for (std::size_t ic = 0; ic < d.ci; ++ic) {
            for (std::size_t fy = 0; fy < d.hf; ++fy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * d.stride - d.pad +
                                        static_cast<std::ptrdiff_t>(fy);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t fx = 0; fx < d.wf; ++fx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * d.stride - d.pad +
                                          static_cast<std::ptrdiff_t>(fx);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                dwf[(ic * d.hf + fy) * d.wf + fx] +=
                    g * xb[(ic * d.h + static_cast<std::size_t>(iy)) * d.w +
                           static_cast<std::size_t>(ix)];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace bb::kernels
