#include "wtal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>

#include "wtal/kernels.hpp"

namespace wtal::ad {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dimension must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (shape.empty()) throw DimensionError("tensor shape must have rank 1 or 2");
  return n;
}

void check_rank(const TensorPtr& t, const char* op) {
  if (t->shape.empty() || t->shape.size() > 2)
    throw DimensionError(std::string(op) + ": tensor rank must be 1 or 2");
}

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape)
    throw DimensionError(std::string(op) + ": shape mismatch");
}

// Marks the accumulator live and returns it ready for +=.
std::vector<double>& acc(const TensorPtr& t) {
  t->ensure_grad();
  t->grad_live = true;
  return t->grad;
}

bool wants(const TensorPtr& t) { return t && t->requires_grad; }

}  // namespace

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad,
                      std::string name) {
  auto t = std::make_shared<Tensor>();
  std::size_t n = shape_size(shape);
  t->shape = std::move(shape);
  t->data.assign(n, 0.0);
  t->requires_grad = requires_grad;
  t->name = std::move(name);
  return t;
}

TensorPtr make_constant(std::vector<int> shape, std::vector<double> values) {
  std::size_t n = shape_size(shape);
  if (values.size() != n)
    throw DimensionError("make_constant: value count does not match shape");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  return t;
}

TensorPtr make_scalar(double v) { return make_constant({1}, {v}); }

void Graph::push(const TensorPtr& out, bool needs_grad,
                 std::function<void()> back) {
  if (!record_ || !needs_grad) return;
  out->requires_grad = true;
  nodes_.push_back({out, std::move(back)});
}

void Graph::backward(const TensorPtr& loss) {
  if (!record_) throw ParameterError("backward: graph was built with record=false");
  if (!loss->is_scalar()) throw DimensionError("backward: loss must be a scalar");
  acc(loss)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->out->grad_live) continue;  // not on the path to the loss
    it->out->ensure_grad();
    it->back();
  }
}

// --- arithmetic ------------------------------------------------------------

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "add");
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  push(out, wants(a) || wants(b), [a, b, out, n] {
    if (wants(a)) kern::axpy(static_cast<int>(n), 1.0, out->grad.data(), acc(a).data());
    if (wants(b)) kern::axpy(static_cast<int>(n), 1.0, out->grad.data(), acc(b).data());
  });
  return out;
}

TensorPtr Graph::sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "sub");
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  push(out, wants(a) || wants(b), [a, b, out, n] {
    if (wants(a)) kern::axpy(static_cast<int>(n), 1.0, out->grad.data(), acc(a).data());
    if (wants(b)) kern::axpy(static_cast<int>(n), -1.0, out->grad.data(), acc(b).data());
  });
  return out;
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "mul");
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  push(out, wants(a) || wants(b), [a, b, out, n] {
    if (wants(a)) {
      auto& g = acc(a);
      for (std::size_t i = 0; i < n; ++i) g[i] += out->grad[i] * b->data[i];
    }
    if (wants(b)) {
      auto& g = acc(b);
      for (std::size_t i = 0; i < n; ++i) g[i] += out->grad[i] * a->data[i];
    }
  });
  return out;
}

TensorPtr Graph::scale(const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * c;
  push(out, wants(a), [a, out, c, n] {
    kern::axpy(static_cast<int>(n), c, out->grad.data(), acc(a).data());
  });
  return out;
}

TensorPtr Graph::add_scalar(const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + c;
  push(out, wants(a), [a, out, n] {
    kern::axpy(static_cast<int>(n), 1.0, out->grad.data(), acc(a).data());
  });
  return out;
}

TensorPtr Graph::add_rowvec(const TensorPtr& a, const TensorPtr& v) {
  check_rank(a, "add_rowvec");
  if (v->shape.size() != 1 || v->cols() != a->cols())
    throw DimensionError("add_rowvec: vector length must equal column count");
  const int r = a->rows(), c = a->cols();
  auto out = make_tensor(a->shape);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<std::size_t>(i) * c + j] =
          a->data[static_cast<std::size_t>(i) * c + j] + v->data[j];
  push(out, wants(a) || wants(v), [a, v, out, r, c] {
    if (wants(a))
      kern::axpy(r * c, 1.0, out->grad.data(), acc(a).data());
    if (wants(v)) {
      auto& g = acc(v);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          g[j] += out->grad[static_cast<std::size_t>(i) * c + j];
    }
  });
  return out;
}

// --- linear algebra ---------------------------------------------------------

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2)
    throw DimensionError("matmul: both operands must be rank 2");
  const int m = a->shape[0], k = a->shape[1];
  if (b->shape[0] != k)
    throw DimensionError("matmul: inner dimensions do not match");
  const int n = b->shape[1];
  auto out = make_tensor({m, n});
  kern::gemm(false, false, m, n, k, 1.0, a->data.data(), b->data.data(), 0.0,
             out->data.data());
  push(out, wants(a) || wants(b), [a, b, out, m, n, k] {
    if (wants(a))  // dA += G * B^T
      kern::gemm(false, true, m, k, n, 1.0, out->grad.data(), b->data.data(),
                 1.0, acc(a).data());
    if (wants(b))  // dB += A^T * G
      kern::gemm(true, false, k, n, m, 1.0, a->data.data(), out->grad.data(),
                 1.0, acc(b).data());
  });
  return out;
}

TensorPtr Graph::transpose(const TensorPtr& a) {
  if (a->shape.size() != 2)
    throw DimensionError("transpose: operand must be rank 2");
  const int r = a->shape[0], c = a->shape[1];
  auto out = make_tensor({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<std::size_t>(j) * r + i] =
          a->data[static_cast<std::size_t>(i) * c + j];
  push(out, wants(a), [a, out, r, c] {
    auto& g = acc(a);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        g[static_cast<std::size_t>(i) * c + j] +=
            out->grad[static_cast<std::size_t>(j) * r + i];
  });
  return out;
}

// --- pointwise nonlinearities ----------------------------------------------

TensorPtr Graph::exp(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  kern::unary_map(kern::Unary::Exp, static_cast<int>(a->size()),
                  a->data.data(), out->data.data());
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i)
      g[i] += out->grad[i] * out->data[i];
  });
  return out;
}

TensorPtr Graph::log(const TensorPtr& a) {
  for (double v : a->data)
    if (!(v > 0.0))
      throw NumericError("log: input must be strictly positive");
  auto out = make_tensor(a->shape);
  kern::unary_map(kern::Unary::Log, static_cast<int>(a->size()),
                  a->data.data(), out->data.data());
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i)
      g[i] += out->grad[i] / a->data[i];
  });
  return out;
}

TensorPtr Graph::sigmoid(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  kern::unary_map(kern::Unary::Sigmoid, static_cast<int>(a->size()),
                  a->data.data(), out->data.data());
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i) {
      const double y = out->data[i];
      g[i] += out->grad[i] * y * (1.0 - y);
    }
  });
  return out;
}

TensorPtr Graph::relu(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  kern::unary_map(kern::Unary::Relu, static_cast<int>(a->size()),
                  a->data.data(), out->data.data());
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i)
      if (a->data[i] > 0.0) g[i] += out->grad[i];
  });
  return out;
}

TensorPtr Graph::gelu(const TensorPtr& a) {
  auto out = make_tensor(a->shape);
  kern::unary_map(kern::Unary::Gelu, static_cast<int>(a->size()),
                  a->data.data(), out->data.data());
  push(out, wants(a), [a, out] {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i) {
      const double x = a->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g[i] += out->grad[i] * (cdf + x * pdf);
    }
  });
  return out;
}

TensorPtr Graph::clamp(const TensorPtr& a, double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("clamp: lo must not exceed hi");
  auto out = make_tensor(a->shape);
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i)
    out->data[i] = std::min(std::max(a->data[i], lo), hi);
  push(out, wants(a), [a, out, lo, hi, n] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < n; ++i)
      if (a->data[i] >= lo && a->data[i] <= hi) g[i] += out->grad[i];
  });
  return out;
}

// --- normalizations ----------------------------------------------------------

TensorPtr Graph::softmax_rows(const TensorPtr& a) {
  check_rank(a, "softmax_rows");
  for (double v : a->data)
    if (!std::isfinite(v))
      throw NumericError("softmax_rows: non-finite input");
  const int r = a->rows(), c = a->cols();
  auto out = make_tensor(a->shape);
  kern::row_softmax(r, c, a->data.data(), out->data.data());
  push(out, wants(a), [a, out, r, c] {
    auto& g = acc(a);
    for (int i = 0; i < r; ++i) {
      const double* y = out->data.data() + static_cast<std::size_t>(i) * c;
      const double* gy = out->grad.data() + static_cast<std::size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
      double* gx = g.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

TensorPtr Graph::layer_norm_rows(const TensorPtr& x, const TensorPtr& gamma,
                                 const TensorPtr& beta) {
  check_rank(x, "layer_norm_rows");
  const int r = x->rows(), c = x->cols();
  if (gamma->shape.size() != 1 || gamma->cols() != c ||
      beta->shape.size() != 1 || beta->cols() != c)
    throw DimensionError("layer_norm_rows: gamma/beta length must equal column count");
  auto out = make_tensor(x->shape);
  auto mean = std::make_shared<std::vector<double>>(r);
  auto rstd = std::make_shared<std::vector<double>>(r);
  kern::row_layer_norm(r, c, x->data.data(), gamma->data.data(),
                       beta->data.data(), kern::kLayerNormEps,
                       out->data.data(), mean->data(), rstd->data());
  push(out, wants(x) || wants(gamma) || wants(beta),
       [x, gamma, beta, out, mean, rstd, r, c] {
         for (int i = 0; i < r; ++i) {
           const double mu = (*mean)[i], rs = (*rstd)[i];
           const double* xr = x->data.data() + static_cast<std::size_t>(i) * c;
           const double* gy = out->grad.data() + static_cast<std::size_t>(i) * c;
           if (wants(gamma)) {
             auto& gg = acc(gamma);
             for (int j = 0; j < c; ++j) gg[j] += gy[j] * (xr[j] - mu) * rs;
           }
           if (wants(beta)) {
             auto& gb = acc(beta);
             for (int j = 0; j < c; ++j) gb[j] += gy[j];
           }
           if (wants(x)) {
             // dxhat_j = gy_j * gamma_j; dx = rstd * (dxhat - mean(dxhat)
             //   - xhat * mean(dxhat * xhat))
             double s1 = 0.0, s2 = 0.0;
             for (int j = 0; j < c; ++j) {
               const double dxh = gy[j] * gamma->data[j];
               const double xh = (xr[j] - mu) * rs;
               s1 += dxh;
               s2 += dxh * xh;
             }
             s1 /= c;
             s2 /= c;
             auto& gx = acc(x);
             double* gxr = gx.data() + static_cast<std::size_t>(i) * c;
             for (int j = 0; j < c; ++j) {
               const double dxh = gy[j] * gamma->data[j];
               const double xh = (xr[j] - mu) * rs;
               gxr[j] += rs * (dxh - s1 - xh * s2);
             }
           }
         }
       });
  return out;
}

TensorPtr Graph::l2_normalize_rows(const TensorPtr& x) {
  check_rank(x, "l2_normalize_rows");
  const int r = x->rows(), c = x->cols();
  auto out = make_tensor(x->shape);
  auto inv = std::make_shared<std::vector<double>>(r);
  kern::row_l2_normalize(r, c, x->data.data(), kern::kL2NormEps,
                         out->data.data(), inv->data());
  push(out, wants(x), [x, out, inv, r, c] {
    auto& gx = acc(x);
    for (int i = 0; i < r; ++i) {
      const double s = (*inv)[i];
      const double* xr = x->data.data() + static_cast<std::size_t>(i) * c;
      const double* gy = out->grad.data() + static_cast<std::size_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += gy[j] * xr[j];
      double* gxr = gx.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j)
        gxr[j] += s * gy[j] - s * s * s * dot * xr[j];
    }
  });
  return out;
}

// --- shape ops ---------------------------------------------------------------

TensorPtr Graph::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const int c = parts[0]->cols();
  int total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    check_rank(p, "concat_rows");
    if (p->cols() != c)
      throw DimensionError("concat_rows: column counts differ");
    total += p->rows();
    needs = needs || wants(p);
  }
  auto out = make_tensor({total, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
    off += p->size();
  }
  push(out, needs, [parts, out] {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (wants(p)) {
        auto& g = acc(p);
        for (std::size_t i = 0; i < p->size(); ++i) g[i] += out->grad[off + i];
      }
      off += p->size();
    }
  });
  return out;
}

TensorPtr Graph::concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const int r = parts[0]->rows();
  int total = 0;
  bool needs = false;
  for (const auto& p : parts) {
    check_rank(p, "concat_cols");
    if (p->rows() != r) throw DimensionError("concat_cols: row counts differ");
    total += p->cols();
    needs = needs || wants(p);
  }
  auto out = make_tensor({r, total});
  int coff = 0;
  for (const auto& p : parts) {
    const int pc = p->cols();
    for (int i = 0; i < r; ++i)
      std::copy(p->data.begin() + static_cast<std::size_t>(i) * pc,
                p->data.begin() + static_cast<std::size_t>(i + 1) * pc,
                out->data.begin() + static_cast<std::size_t>(i) * total + coff);
    coff += pc;
  }
  push(out, needs, [parts, out, r, total] {
    int coff = 0;
    for (const auto& p : parts) {
      const int pc = p->cols();
      if (wants(p)) {
        auto& g = acc(p);
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < pc; ++j)
            g[static_cast<std::size_t>(i) * pc + j] +=
                out->grad[static_cast<std::size_t>(i) * total + coff + j];
      }
      coff += pc;
    }
  });
  return out;
}

TensorPtr Graph::slice_rows(const TensorPtr& a, int r0, int r1) {
  check_rank(a, "slice_rows");
  const int r = a->rows(), c = a->cols();
  if (r0 < 0 || r1 > r || r0 >= r1)
    throw DimensionError("slice_rows: range out of bounds");
  auto out = make_tensor({r1 - r0, c});
  std::copy(a->data.begin() + static_cast<std::size_t>(r0) * c,
            a->data.begin() + static_cast<std::size_t>(r1) * c,
            out->data.begin());
  push(out, wants(a), [a, out, r0, c] {
    auto& g = acc(a);
    const std::size_t base = static_cast<std::size_t>(r0) * c;
    for (std::size_t i = 0; i < out->size(); ++i) g[base + i] += out->grad[i];
  });
  return out;
}

TensorPtr Graph::slice_cols(const TensorPtr& a, int c0, int c1) {
  check_rank(a, "slice_cols");
  const int r = a->rows(), c = a->cols();
  if (c0 < 0 || c1 > c || c0 >= c1)
    throw DimensionError("slice_cols: range out of bounds");
  const int w = c1 - c0;
  auto out = make_tensor({r, w});
  for (int i = 0; i < r; ++i)
    std::copy(a->data.begin() + static_cast<std::size_t>(i) * c + c0,
              a->data.begin() + static_cast<std::size_t>(i) * c + c1,
              out->data.begin() + static_cast<std::size_t>(i) * w);
  push(out, wants(a), [a, out, c0, r, c, w] {
    auto& g = acc(a);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < w; ++j)
        g[static_cast<std::size_t>(i) * c + c0 + j] +=
            out->grad[static_cast<std::size_t>(i) * w + j];
  });
  return out;
}

TensorPtr Graph::reshape(const TensorPtr& a, std::vector<int> shape) {
  if (shape_size(shape) != a->size())
    throw DimensionError("reshape: element count must be preserved");
  auto out = std::make_shared<Tensor>();
  out->shape = std::move(shape);
  out->data = a->data;
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < out->size(); ++i) g[i] += out->grad[i];
  });
  return out;
}

TensorPtr Graph::gather_rows(const TensorPtr& a, std::vector<int> indices) {
  if (a->shape.size() != 2)
    throw DimensionError("gather_rows: operand must be rank 2");
  const int r = a->shape[0], c = a->shape[1];
  for (int ix : indices)
    if (ix < 0 || ix >= r)
      throw DimensionError("gather_rows: index out of range");
  const int n = static_cast<int>(indices.size());
  if (n == 0) throw DimensionError("gather_rows: empty index list");
  auto out = make_tensor({n, c});
  for (int i = 0; i < n; ++i)
    std::copy(a->data.begin() + static_cast<std::size_t>(indices[i]) * c,
              a->data.begin() + static_cast<std::size_t>(indices[i] + 1) * c,
              out->data.begin() + static_cast<std::size_t>(i) * c);
  push(out, wants(a), [a, out, indices = std::move(indices), c] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (int j = 0; j < c; ++j)
        g[static_cast<std::size_t>(indices[i]) * c + j] +=
            out->grad[i * c + j];
  });
  return out;
}

TensorPtr Graph::tile_rows(const TensorPtr& v, int n) {
  if (v->shape.size() != 1)
    throw DimensionError("tile_rows: operand must be rank 1");
  if (n <= 0) throw ParameterError("tile_rows: row count must be positive");
  const int c = v->cols();
  auto out = make_tensor({n, c});
  for (int i = 0; i < n; ++i)
    std::copy(v->data.begin(), v->data.end(),
              out->data.begin() + static_cast<std::size_t>(i) * c);
  push(out, wants(v), [v, out, n, c] {
    auto& g = acc(v);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        g[j] += out->grad[static_cast<std::size_t>(i) * c + j];
  });
  return out;
}

// --- reductions ----------------------------------------------------------------

TensorPtr Graph::row_sum(const TensorPtr& a) {
  check_rank(a, "row_sum");
  const int r = a->rows(), c = a->cols();
  auto out = make_tensor({r});
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += a->at(i, j);
    out->data[i] = s;
  }
  push(out, wants(a), [a, out, r, c] {
    auto& g = acc(a);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        g[static_cast<std::size_t>(i) * c + j] += out->grad[i];
  });
  return out;
}

TensorPtr Graph::sum(const TensorPtr& a) {
  auto out = make_tensor({1});
  double s = 0.0;
  for (double v : a->data) s += v;
  out->data[0] = s;
  push(out, wants(a), [a, out] {
    auto& g = acc(a);
    for (std::size_t i = 0; i < a->size(); ++i) g[i] += out->grad[0];
  });
  return out;
}

TensorPtr Graph::mean(const TensorPtr& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a->size()));
}

namespace {

// Indices of the k largest values; ties resolved toward the lower index.
std::vector<int> topk_indices(const double* v, int n, int k) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [v](int a, int b) {
                      if (v[a] != v[b]) return v[a] > v[b];
                      return a < b;
                    });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

TensorPtr Graph::topk_mean(const TensorPtr& x, int k) {
  if (x->shape.size() != 1)
    throw DimensionError("topk_mean: operand must be rank 1");
  const int n = x->cols();
  if (k < 1 || k > n)
    throw ParameterError("topk_mean: k must be in [1, length]");
  auto sel = topk_indices(x->data.data(), n, k);
  auto out = make_tensor({1});
  double s = 0.0;
  for (int ix : sel) s += x->data[ix];
  out->data[0] = s / k;
  push(out, wants(x), [x, out, sel = std::move(sel), k] {
    auto& g = acc(x);
    const double w = out->grad[0] / k;
    for (int ix : sel) g[ix] += w;
  });
  return out;
}

TensorPtr Graph::topk_mean_cols(const TensorPtr& a, int k) {
  if (a->shape.size() != 2)
    throw DimensionError("topk_mean_cols: operand must be rank 2");
  const int r = a->shape[0], c = a->shape[1];
  if (k < 1 || k > r)
    throw ParameterError("topk_mean_cols: k must be in [1, rows]");
  auto out = make_tensor({c});
  auto sel = std::make_shared<std::vector<std::vector<int>>>();
  sel->reserve(static_cast<std::size_t>(c));
  std::vector<double> col(static_cast<std::size_t>(r));
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) col[i] = a->at(i, j);
    auto ids = topk_indices(col.data(), r, k);
    double s = 0.0;
    for (int ix : ids) s += col[ix];
    out->data[j] = s / k;
    sel->push_back(std::move(ids));
  }
  push(out, wants(a), [a, out, sel, c, k] {
    auto& g = acc(a);
    for (int j = 0; j < c; ++j) {
      const double w = out->grad[j] / k;
      for (int ix : (*sel)[j]) g[static_cast<std::size_t>(ix) * c + j] += w;
    }
  });
  return out;
}

// --- attention ----------------------------------------------------------------

TensorPtr Graph::relative_bias_add(const TensorPtr& scores,
                                   const TensorPtr& bias) {
  if (scores->shape.size() != 2 || scores->shape[0] != scores->shape[1])
    throw DimensionError("relative_bias_add: scores must be square");
  if (bias->shape.size() != 1 || bias->cols() % 2 == 0)
    throw DimensionError("relative_bias_add: bias must be rank 1 with odd length");
  const int t = scores->shape[0];
  const int l = bias->cols();
  const int half = l / 2;
  auto out = make_tensor(scores->shape);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) {
      const int ix = std::clamp(j - i + half, 0, l - 1);
      out->at(i, j) = scores->at(i, j) + bias->data[ix];
    }
  push(out, wants(scores) || wants(bias), [scores, bias, out, t, l, half] {
    if (wants(scores))
      kern::axpy(t * t, 1.0, out->grad.data(), acc(scores).data());
    if (wants(bias)) {
      auto& g = acc(bias);
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < t; ++j) {
          const int ix = std::clamp(j - i + half, 0, l - 1);
          g[ix] += out->grad[static_cast<std::size_t>(i) * t + j];
        }
    }
  });
  return out;
}

TensorPtr Graph::scaled_dot_attention(const TensorPtr& q, const TensorPtr& k,
                                      const TensorPtr& v, int heads,
                                      const TensorPtr& bias) {
  if (q->shape.size() != 2 || q->shape != k->shape || q->shape != v->shape)
    throw DimensionError("scaled_dot_attention: q, k, v must share a rank-2 shape");
  const int d = q->shape[1];
  if (heads < 1 || d % heads != 0)
    throw DimensionError("scaled_dot_attention: width must be divisible by heads");
  if (bias && (bias->shape.size() != 2 || bias->shape[0] != heads))
    throw DimensionError("scaled_dot_attention: bias must be heads x window");
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<TensorPtr> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(v, h * dh, (h + 1) * dh);
    auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (bias) {
      auto bh = reshape(slice_rows(bias, h, h + 1), {bias->shape[1]});
      scores = relative_bias_add(scores, bh);
    }
    outs.push_back(matmul(softmax_rows(scores), vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

// --- parameters -----------------------------------------------------------------

TensorPtr ParamSet::add(const std::string& name, std::vector<int> shape) {
  if (find(name)) throw ParameterError("duplicate parameter name: " + name);
  auto t = make_tensor(std::move(shape), true, name);
  params.push_back(t);
  return t;
}

TensorPtr ParamSet::find(const std::string& name) const {
  for (const auto& p : params)
    if (p->name == name) return p;
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& p : params) {
    p->grad.assign(p->data.size(), 0.0);
    p->grad_live = false;
  }
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p->size();
  return n;
}

}  // namespace wtal::ad
