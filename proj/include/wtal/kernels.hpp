#pragma once

#include <cstddef>

// Dense numeric kernels behind the autodiff ops and the optimizer.
//
// Every kernel exists twice: kern::serial is the reference implementation,
// kern::par the OpenMP one. The parallel variants split work only across
// independent output elements and never reorder a floating-point reduction,
// so serial and parallel results are bitwise identical for any thread count.
// Tests assert that equality; the dispatchers at namespace scope pick the
// parallel path when it is compiled in and the problem is large enough.
// Reductions that produce a single scalar stay serial everywhere.

namespace wtal::kern {

enum class Unary { Exp, Log, Sigmoid, Relu, Gelu, Neg };

// Shared stabilizers so every caller normalizes the same way.
inline constexpr double kLayerNormEps = 1e-10;
inline constexpr double kL2NormEps = 1e-12;

namespace serial {

// c = alpha * op(a) * op(b) + beta * c, row-major dense.
// op(a) is m x k, op(b) is k x n, c is m x n.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c);

// Row-wise softmax with max subtraction.
void row_softmax(int rows, int cols, const double* in, double* out);

// Row-wise layer norm. gamma/beta may be nullptr (no affine). mean/rstd
// receive per-row statistics for the backward pass (may be nullptr).
void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd);

// Row-wise L2 normalization; inv_norm (len rows) may be nullptr.
void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm);

void unary_map(Unary op, std::size_t n, const double* in, double* out);

// y += alpha * x
void axpy(std::size_t n, double alpha, const double* x, double* y);

// One Adam update with bias correction. step is 1-based.
void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps);

}  // namespace serial

namespace par {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c);
void row_softmax(int rows, int cols, const double* in, double* out);
void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd);
void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm);
void unary_map(Unary op, std::size_t n, const double* in, double* out);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps);

}  // namespace par

// Dispatchers. Small problems stay serial to avoid fork overhead.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c);
void row_softmax(int rows, int cols, const double* in, double* out);
void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd);
void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm);
void unary_map(Unary op, std::size_t n, const double* in, double* out);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps);

bool openmp_enabled();

}  // namespace wtal::kern
