#include "icf/kernels.hpp"

#include <cmath>
#include <limits>

namespace icf {

namespace {

// Below this many output elements the parallel-for overhead is not worth it.
constexpr std::size_t kParallelThreshold = 4096;

inline void softmax_one_row(const double* xr, double* yr, std::size_t cols) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cols; ++c) {
    if (xr[c] > m) m = xr[c];
  }
  if (m == -std::numeric_limits<double>::infinity()) {
    for (std::size_t c = 0; c < cols; ++c) yr[c] = 0.0;
    return;
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (xr[c] == -std::numeric_limits<double>::infinity()) {
      yr[c] = 0.0;
    } else {
      yr[c] = std::exp(xr[c] - m);
      sum += yr[c];
    }
  }
  double inv = 1.0 / sum;
  for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
}

inline void softmax_one_row_masked(const double* xr, const std::uint8_t* ar, double* yr,
                                   std::size_t cols) {
  double m = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t c = 0; c < cols; ++c) {
    if (ar[c] && xr[c] > m) {
      m = xr[c];
      any = true;
    }
  }
  if (!any) {
    for (std::size_t c = 0; c < cols; ++c) yr[c] = 0.0;
    return;
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (ar[c]) {
      yr[c] = std::exp(xr[c] - m);
      sum += yr[c];
    } else {
      yr[c] = 0.0;
    }
  }
  double inv = 1.0 / sum;
  for (std::size_t c = 0; c < cols; ++c) {
    if (ar[c]) yr[c] *= inv;
  }
}

inline void layer_norm_one_row(const double* xr, const double* gain, const double* bias, double* yr,
                               std::size_t cols, double eps) {
  double mean = 0.0;
  for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    double d = xr[c] - mean;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t c = 0; c < cols; ++c) {
    yr[c] = (xr[c] - mean) * inv * gain[c] + bias[c];
  }
}

}  // namespace

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  const std::int64_t mm = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < mm; ++i) {
    const double* ar = a + i * static_cast<std::int64_t>(k);
    double* cr = c + i * static_cast<std::int64_t>(n);
    for (std::size_t j = 0; j < n; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ar[p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  const std::int64_t mm = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < mm; ++i) {
    const double* ar = a + i * static_cast<std::int64_t>(k);
    double* cr = c + i * static_cast<std::int64_t>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += ar[p] * br[p];
      cr[j] = sum;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  const std::int64_t kk = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (k * n >= kParallelThreshold)
  for (std::int64_t i = 0; i < kk; ++i) {
    double* cr = c + i * static_cast<std::int64_t>(n);
    for (std::size_t j = 0; j < n; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double av = a[p * k + static_cast<std::size_t>(i)];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

void mix_masked(const double* w, const double* v, const std::uint8_t* allowed, double* c,
                std::size_t q, std::size_t n, std::size_t d) {
  const std::int64_t qq = static_cast<std::int64_t>(q);
#pragma omp parallel for schedule(static) if (q * d >= kParallelThreshold)
  for (std::int64_t i = 0; i < qq; ++i) {
    const double* wr = w + i * static_cast<std::int64_t>(n);
    const std::uint8_t* ar = allowed + i * static_cast<std::int64_t>(n);
    double* cr = c + i * static_cast<std::int64_t>(d);
    for (std::size_t j = 0; j < d; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!ar[p]) continue;
      double wv = wr[p];
      const double* vr = v + p * d;
      for (std::size_t j = 0; j < d; ++j) cr[j] += wv * vr[j];
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const std::int64_t rr = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::int64_t r = 0; r < rr; ++r) {
    softmax_one_row(x + r * static_cast<std::int64_t>(cols), y + r * static_cast<std::int64_t>(cols),
                    cols);
  }
}

void softmax_rows_masked(const double* x, const std::uint8_t* allowed, double* y, std::size_t rows,
                         std::size_t cols) {
  const std::int64_t rr = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::int64_t r = 0; r < rr; ++r) {
    std::int64_t off = r * static_cast<std::int64_t>(cols);
    softmax_one_row_masked(x + off, allowed + off, y + off, cols);
  }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     std::size_t rows, std::size_t cols, double eps) {
  const std::int64_t rr = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::int64_t r = 0; r < rr; ++r) {
    std::int64_t off = r * static_cast<std::int64_t>(cols);
    layer_norm_one_row(x + off, gain, bias, y + off, cols, eps);
  }
}

}  // namespace kernels

namespace ref {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t j = 0; j < n; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ar[p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += ar[p] * br[p];
      cr[j] = sum;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n) {
  for (std::size_t i = 0; i < k; ++i) {
    double* cr = c + i * n;
    for (std::size_t j = 0; j < n; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double av = a[p * k + i];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

void mix_masked(const double* w, const double* v, const std::uint8_t* allowed, double* c,
                std::size_t q, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < q; ++i) {
    const double* wr = w + i * n;
    const std::uint8_t* ar = allowed + i * n;
    double* cr = c + i * d;
    for (std::size_t j = 0; j < d; ++j) cr[j] = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!ar[p]) continue;
      double wv = wr[p];
      const double* vr = v + p * d;
      for (std::size_t j = 0; j < d; ++j) cr[j] += wv * vr[j];
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) softmax_one_row(x + r * cols, y + r * cols, cols);
}

void softmax_rows_masked(const double* x, const std::uint8_t* allowed, double* y, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_one_row_masked(x + r * cols, allowed + r * cols, y + r * cols, cols);
  }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    layer_norm_one_row(x + r * cols, gain, bias, y + r * cols, cols, eps);
  }
}

}  // namespace ref

}  // namespace icf
