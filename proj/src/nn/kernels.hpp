#pragma once

// Dense float kernels used by the convolution layer. All loops run in a fixed
// order so results are bit-reproducible for a given build.

#include <cstddef>

namespace pct::kernels {

// col has shape (channels * k * k, out_h * out_w).
void im2col(const float* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t out_h, std::size_t out_w, float* col);

// Scatter-adds col back into img (img must be pre-zeroed by the caller if needed).
void col2im_add(const float* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w, float* img);

// C[M x N] (+)= op(A) * B[K x N], where op(A)(i, k) = a[i * a_row + k * a_col].
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t a_row, std::size_t a_col,
          const float* b, float* c, bool accumulate);

// C[M x N] += A[M x len] * B[N x len]^T
void gemm_nt_add(std::size_t m, std::size_t n, std::size_t len, const float* a, const float* b, float* c);

}  // namespace pct::kernels
