#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace icf {

// Hot inner loops shared by the graph ops. Each output element is produced
// by exactly one thread with a fixed accumulation order, so results are
// bit-identical across thread counts and match the serial reference in
// icf::ref exactly. tests/test_kernels.cpp and tools/bench_kernels.cpp
// compare the two.
namespace kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// c[k x n] = a[m x k]^T * b[m x n]
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);

// c[q x d] = w[q x n] * v[n x d], skipping (row, col) pairs with
// allowed[row * n + col] == 0. Skipped weights are never read.
void mix_masked(const double* w, const double* v, const std::uint8_t* allowed, double* c,
                std::size_t q, std::size_t n, std::size_t d);

// Row-wise softmax with max-subtraction. Entries of -inf get weight exactly
// 0; a row whose entries are all -inf comes out all zero.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

// Softmax restricted to allowed entries (1 = allowed). Disallowed entries are
// never read and their outputs are exactly 0. Fully disallowed rows are all
// zero.
void softmax_rows_masked(const double* x, const std::uint8_t* allowed, double* y, std::size_t rows,
                         std::size_t cols);

// Per-row normalization to zero mean / unit variance (epsilon inside the
// square root), then elementwise gain and bias.
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     std::size_t rows, std::size_t cols, double eps);

}  // namespace kernels

// Serial reference implementations, kept for tests and the kernel benchmark.
namespace ref {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
void mix_masked(const double* w, const double* v, const std::uint8_t* allowed, double* c,
                std::size_t q, std::size_t n, std::size_t d);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void softmax_rows_masked(const double* x, const std::uint8_t* allowed, double* y, std::size_t rows,
                         std::size_t cols);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     std::size_t rows, std::size_t cols, double eps);

}  // namespace ref

}  // namespace icf
