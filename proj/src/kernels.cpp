#include "wtal/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wtal::kern {

namespace {

inline double apply_unary(Unary op, double x) {
  switch (op) {
    case Unary::Exp:
      return std::exp(x);
    case Unary::Log:
      return std::log(x);
    case Unary::Sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
    case Unary::Relu:
      return x > 0.0 ? x : 0.0;
    case Unary::Gelu:
      return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    case Unary::Neg:
      return -x;
  }
  return x;
}

}  // namespace

// ---------------------------------------------------------------- serial --

namespace serial {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c) {
  // Leading dimensions for the stated logical shapes: op(a)=m x k, op(b)=k x n.
  // Stored a is (m x k) or (k x m) when transposed; same for b.
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a ? a[static_cast<std::size_t>(p) * m + i]
                                  : a[static_cast<std::size_t>(i) * k + p];
        const double bv = trans_b ? b[static_cast<std::size_t>(j) * k + p]
                                  : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      crow[j] = beta == 0.0 ? alpha * acc : beta * crow[j] + alpha * acc;
    }
  }
}

void row_softmax(int rows, int cols, const double* in, double* out) {
  for (int i = 0; i < rows; ++i) {
    const double* x = in + static_cast<std::size_t>(i) * cols;
    double* y = out + static_cast<std::size_t>(i) * cols;
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
}

void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd) {
  for (int i = 0; i < rows; ++i) {
    const double* x = in + static_cast<std::size_t>(i) * cols;
    double* y = out + static_cast<std::size_t>(i) * cols;
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += x[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = x[j] - mu;
      var += d * d;
    }
    var /= cols;
    const double rs = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) {
      double v = (x[j] - mu) * rs;
      if (gamma) v *= gamma[j];
      if (beta) v += beta[j];
      y[j] = v;
    }
    if (mean) mean[i] = mu;
    if (rstd) rstd[i] = rs;
  }
}

void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm) {
  for (int i = 0; i < rows; ++i) {
    const double* x = in + static_cast<std::size_t>(i) * cols;
    double* y = out + static_cast<std::size_t>(i) * cols;
    double sq = 0.0;
    for (int j = 0; j < cols; ++j) sq += x[j] * x[j];
    const double inv = 1.0 / std::sqrt(sq + eps);
    for (int j = 0; j < cols; ++j) y[j] = x[j] * inv;
    if (inv_norm) inv_norm[i] = inv;
  }
}

void unary_map(Unary op, std::size_t n, const double* in, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = apply_unary(op, in[i]);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace serial

// ------------------------------------------------------------------- par --

namespace par {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        const double av = trans_a ? a[static_cast<std::size_t>(p) * m + i]
                                  : a[static_cast<std::size_t>(i) * k + p];
        const double bv = trans_b ? b[static_cast<std::size_t>(j) * k + p]
                                  : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      crow[j] = beta == 0.0 ? alpha * acc : beta * crow[j] + alpha * acc;
    }
  }
}

void row_softmax(int rows, int cols, const double* in, double* out) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    serial::row_softmax(1, cols, in + static_cast<std::size_t>(i) * cols,
                        out + static_cast<std::size_t>(i) * cols);
  }
}

void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    serial::row_layer_norm(1, cols, in + static_cast<std::size_t>(i) * cols,
                           gamma, beta, eps,
                           out + static_cast<std::size_t>(i) * cols,
                           mean ? mean + i : nullptr, rstd ? rstd + i : nullptr);
  }
}

void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < rows; ++i) {
    serial::row_l2_normalize(1, cols, in + static_cast<std::size_t>(i) * cols,
                             eps, out + static_cast<std::size_t>(i) * cols,
                             inv_norm ? inv_norm + i : nullptr);
  }
}

void unary_map(Unary op, std::size_t n, const double* in, double* out) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    out[i] = apply_unary(op, in[i]);
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    y[i] += alpha * x[i];
  }
}

void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace par

// ----------------------------------------------------------- dispatchers --

namespace {
// Below this many scalar ops the fork/join overhead dominates.
constexpr long long kParThreshold = 16384;
}  // namespace

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, const double* b, double beta, double* c) {
#ifdef _OPENMP
  if (static_cast<long long>(m) * n * k >= kParThreshold) {
    par::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
    return;
  }
#endif
  serial::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
}

void row_softmax(int rows, int cols, const double* in, double* out) {
#ifdef _OPENMP
  if (static_cast<long long>(rows) * cols >= kParThreshold) {
    par::row_softmax(rows, cols, in, out);
    return;
  }
#endif
  serial::row_softmax(rows, cols, in, out);
}

void row_layer_norm(int rows, int cols, const double* in, const double* gamma,
                    const double* beta, double eps, double* out, double* mean,
                    double* rstd) {
#ifdef _OPENMP
  if (static_cast<long long>(rows) * cols >= kParThreshold) {
    par::row_layer_norm(rows, cols, in, gamma, beta, eps, out, mean, rstd);
    return;
  }
#endif
  serial::row_layer_norm(rows, cols, in, gamma, beta, eps, out, mean, rstd);
}

void row_l2_normalize(int rows, int cols, const double* in, double eps,
                      double* out, double* inv_norm) {
#ifdef _OPENMP
  if (static_cast<long long>(rows) * cols >= kParThreshold) {
    par::row_l2_normalize(rows, cols, in, eps, out, inv_norm);
    return;
  }
#endif
  serial::row_l2_normalize(rows, cols, in, eps, out, inv_norm);
}

void unary_map(Unary op, std::size_t n, const double* in, double* out) {
#ifdef _OPENMP
  if (static_cast<long long>(n) >= kParThreshold) {
    par::unary_map(op, n, in, out);
    return;
  }
#endif
  serial::unary_map(op, n, in, out);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
#ifdef _OPENMP
  if (static_cast<long long>(n) >= kParThreshold) {
    par::axpy(n, alpha, x, y);
    return;
  }
#endif
  serial::axpy(n, alpha, x, y);
}

void adam_update(std::size_t n, double* w, const double* g, double* m,
                 double* v, long step, double lr, double beta1, double beta2,
                 double eps) {
#ifdef _OPENMP
  if (static_cast<long long>(n) >= kParThreshold) {
    par::adam_update(n, w, g, m, v, step, lr, beta1, beta2, eps);
    return;
  }
#endif
  serial::adam_update(n, w, g, m, v, step, lr, beta1, beta2, eps);
}

}  // namespace wtal::kern
