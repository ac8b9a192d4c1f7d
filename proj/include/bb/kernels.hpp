#pragma once

#include <cstddef>

namespace bb::kernels {

// Dense compute kernels behind the autodiff ops. Each kernel has an
// OpenMP-parallel entry point and a serial reference twin; the tests compare
// the two and the parallel versions keep a fixed per-element accumulation
// order so results are bit-identical across thread counts.

/// C[m x n] (+)= op(A) * op(B) with optional transposes.
/// A is m x k after transpose, B is k x n after transpose.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);
void gemm_serial(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const double* a, const double* b, double* c, bool accumulate);

struct Conv2dDims {
  std::size_t n, ci, h, w;    // input
  std::size_t co, hf, wf;     // kernel
  int stride, pad;
  std::size_t oh, ow;         // output spatial size
};

Conv2dDims conv2d_dims(std::size_t n, std::size_t ci, std::size_t h, std::size_t w,
                       std::size_t co, std::size_t hf, std::size_t wf, int stride, int pad);

void conv2d_forward(const Conv2dDims& d, const double* x, const double* wt, double* y);
void conv2d_forward_serial(const Conv2dDims& d, const double* x, const double* wt, double* y);

/// Accumulates into dx / dw.
void conv2d_backward_input(const Conv2dDims& d, const double* dy, const double* wt, double* dx);
void conv2d_backward_weight(const Conv2dDims& d, const double* dy, const double* x, double* dw);

}  // namespace bb::kernels
