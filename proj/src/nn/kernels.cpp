#include "kernels.hpp"

#include <algorithm>
#include <cstring>

namespace pct::kernels {

void im2col(const float* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t out_h, std::size_t out_w, float* col) {
  const std::size_t npix = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* dst = col + ((c * k + ky) * k + kx) * npix;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          float* row = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(row, row + out_w, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            // ix = ox + kx - pad; valid range of ox is contiguous
            const long shift = static_cast<long>(kx) - static_cast<long>(pad);
            const long lo = std::max<long>(0, -shift);
            const long hi = std::min<long>(static_cast<long>(out_w), static_cast<long>(w) - shift);
            std::fill(row, row + lo, 0.0f);
            if (hi > lo) std::memcpy(row + lo, srow + lo + shift, static_cast<std::size_t>(hi - lo) * sizeof(float));
            std::fill(row + std::max(lo, hi), row + out_w, 0.0f);
          } else {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              row[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0f : srow[ix];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w, float* img) {
  const std::size_t npix = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    float* dst = img + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* src = col + ((c * k + ky) * k + kx) * npix;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * w;
          const float* row = src + oy * out_w;
          if (stride == 1) {
            const long shift = static_cast<long>(kx) - static_cast<long>(pad);
            const long lo = std::max<long>(0, -shift);
            const long hi = std::min<long>(static_cast<long>(out_w), static_cast<long>(w) - shift);
            for (long ox = lo; ox < hi; ++ox) drow[ox + shift] += row[ox];
          } else {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix >= 0 && ix < static_cast<long>(w)) drow[ix] += row[ox];
            }
          }
        }
      }
    }
  }
}

namespace {

constexpr std::size_t kRows = 8;
constexpr std::size_t kCols = 32;

// Full kRows x kCols tile; the fixed trip counts let the compiler keep the
// accumulators in vector registers.
inline void tile_full(std::size_t kdim, const float* a, std::size_t a_row, std::size_t a_col, const float* b,
                      std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  float acc[kRows][kCols];
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t j = 0; j < kCols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : 0.0f;
  }
  for (std::size_t p = 0; p < kdim; ++p) {
    const float* brow = b + p * ldb;
    for (std::size_t r = 0; r < kRows; ++r) {
      const float av = a[r * a_row + p * a_col];
      for (std::size_t j = 0; j < kCols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t j = 0; j < kCols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

inline void tile_partial(std::size_t rows, std::size_t cols, std::size_t kdim, const float* a, std::size_t a_row,
                         std::size_t a_col, const float* b, std::size_t ldb, float* c, std::size_t ldc,
                         bool accumulate) {
  float acc[kRows][kCols];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : 0.0f;
  }
  for (std::size_t p = 0; p < kdim; ++p) {
    const float* brow = b + p * ldb;
    for (std::size_t r = 0; r < rows; ++r) {
      const float av = a[r * a_row + p * a_col];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t a_row, std::size_t a_col,
          const float* b, float* c, bool accumulate) {
  for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
    const std::size_t cols = std::min(kCols, n - j0);
    for (std::size_t i0 = 0; i0 < m; i0 += kRows) {
      const std::size_t rows = std::min(kRows, m - i0);
      const float* ap = a + i0 * a_row;
      float* cp = c + i0 * n + j0;
      if (rows == kRows && cols == kCols) {
        tile_full(k, ap, a_row, a_col, b + j0, n, cp, n, accumulate);
      } else {
        tile_partial(rows, cols, k, ap, a_row, a_col, b + j0, n, cp, n, accumulate);
      }
    }
  }
}

namespace {

constexpr std::size_t kDotRows = 4;
constexpr std::size_t kDotLanes = 16;

// Dot products of kDotRows rows of a against kDotRows rows of b, each split
// into kDotLanes interleaved partial sums that are reduced in a fixed order.
inline void dot_tile(std::size_t rows_a, std::size_t rows_b, std::size_t len, const float* a, std::size_t lda,
                     const float* b, std::size_t ldb, float* c, std::size_t ldc) {
  float acc[kDotRows][kDotRows][kDotLanes] = {};
  const std::size_t full = len - len % kDotLanes;
  if (rows_a == kDotRows && rows_b == kDotRows) {
    for (std::size_t p = 0; p < full; p += kDotLanes) {
      for (std::size_t i = 0; i < kDotRows; ++i) {
        for (std::size_t j = 0; j < kDotRows; ++j) {
          for (std::size_t l = 0; l < kDotLanes; ++l) acc[i][j][l] += a[i * lda + p + l] * b[j * ldb + p + l];
        }
      }
    }
  } else {
    for (std::size_t p = 0; p < full; p += kDotLanes) {
      for (std::size_t i = 0; i < rows_a; ++i) {
        for (std::size_t j = 0; j < rows_b; ++j) {
          for (std::size_t l = 0; l < kDotLanes; ++l) acc[i][j][l] += a[i * lda + p + l] * b[j * ldb + p + l];
        }
      }
    }
  }
  for (std::size_t p = full; p < len; ++p) {
    for (std::size_t i = 0; i < rows_a; ++i) {
      for (std::size_t j = 0; j < rows_b; ++j) acc[i][j][p - full] += a[i * lda + p] * b[j * ldb + p];
    }
  }
  for (std::size_t i = 0; i < rows_a; ++i) {
    for (std::size_t j = 0; j < rows_b; ++j) {
      float s = 0.0f;
      for (std::size_t l = 0; l < kDotLanes; ++l) s += acc[i][j][l];
      c[i * ldc + j] += s;
    }
  }
}

}  // namespace

void gemm_nt_add(std::size_t m, std::size_t n, std::size_t len, const float* a, const float* b, float* c) {
  for (std::size_t i0 = 0; i0 < m; i0 += kDotRows) {
    const std::size_t ra = std::min(kDotRows, m - i0);
    for (std::size_t j0 = 0; j0 < n; j0 += kDotRows) {
      const std::size_t rb = std::min(kDotRows, n - j0);
      dot_tile(ra, rb, len, a + i0 * len, len, b + j0 * len, len, c + i0 * n + j0, n);
    }
  }
}

}  // namespace pct::kernels
