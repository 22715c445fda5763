#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "wtal/errors.hpp"

// Reverse-mode automatic differentiation over dense 1-D/2-D double arrays.
// Define-by-run: a Graph records operations as they execute and replays the
// tape backwards. Graphs are single-use and cheap; training rebuilds one per
// step. Tensors are shared between graphs (parameters) or owned by one
// forward pass (intermediates). Graph construction and backward are
// single-threaded; finished tensors are safe to read from other threads.

namespace wtal::ad {

struct Tensor {
  std::vector<int> shape;     // rank 1 or 2; scalars are {1}
  std::vector<double> data;   // row-major
  std::vector<double> grad;   // empty until first accumulation
  bool requires_grad = false;
  bool grad_live = false;     // set when a backward pass touched this grad
  std::string name;

  int rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  int cols() const {
    return shape.size() >= 2 ? shape[1] : (shape.empty() ? 0 : shape[0]);
  }
  std::size_t size() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }
  double scalar() const { return data[0]; }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols() + c];
  }

  // Allocates the gradient accumulator (zeros) if absent.
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false,
                      std::string name = "");
TensorPtr make_constant(std::vector<int> shape, std::vector<double> values);
TensorPtr make_scalar(double v);

class Graph {
 public:
  // record=false builds a forward-only graph: nothing is taped and every
  // output is detached. Used for teacher/inference passes.
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // --- arithmetic ---
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);  // elementwise
  TensorPtr scale(const TensorPtr& a, double c);
  TensorPtr add_scalar(const TensorPtr& a, double c);
  TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v);

  // --- linear algebra ---
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr transpose(const TensorPtr& a);

  // --- pointwise nonlinearities ---
  TensorPtr exp(const TensorPtr& a);
  TensorPtr log(const TensorPtr& a);
  TensorPtr sigmoid(const TensorPtr& a);
  TensorPtr relu(const TensorPtr& a);
  TensorPtr gelu(const TensorPtr& a);
  TensorPtr clamp(const TensorPtr& a, double lo, double hi);

  // --- normalizations ---
  TensorPtr softmax_rows(const TensorPtr& a);
  TensorPtr layer_norm_rows(const TensorPtr& x, const TensorPtr& gamma,
                            const TensorPtr& beta);
  TensorPtr l2_normalize_rows(const TensorPtr& x);

  // --- shape ops ---
  TensorPtr concat_rows(const std::vector<TensorPtr>& parts);
  TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
  TensorPtr slice_rows(const TensorPtr& a, int r0, int r1);  // [r0, r1)
  TensorPtr slice_cols(const TensorPtr& a, int c0, int c1);  // [c0, c1)
  TensorPtr reshape(const TensorPtr& a, std::vector<int> shape);
  TensorPtr gather_rows(const TensorPtr& a, std::vector<int> indices);
  TensorPtr tile_rows(const TensorPtr& v, int n);

  // --- reductions ---
  TensorPtr row_sum(const TensorPtr& a);  // 1-D of length rows
  TensorPtr sum(const TensorPtr& a);      // scalar
  TensorPtr mean(const TensorPtr& a);     // scalar

  // Mean of the k largest entries. Ties break toward the lower index;
  // backward routes exactly 1/k to each selected entry.
  TensorPtr topk_mean(const TensorPtr& x, int k);            // 1-D -> scalar
  TensorPtr topk_mean_cols(const TensorPtr& a, int k);       // TxC -> 1-D C

  // Adds a learned relative-position bias to a TxT score matrix.
  // bias is 1-D of odd length L; entry for (t, s) is bias[clip(s - t + L/2)].
  TensorPtr relative_bias_add(const TensorPtr& scores, const TensorPtr& bias);

  // Multi-head scaled dot-product attention over one sequence.
  // q, k, v: T x d with d divisible by heads. bias (optional): heads x L.
  TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k,
                                 const TensorPtr& v, int heads,
                                 const TensorPtr& bias = nullptr);

  // Replays the tape in reverse from a scalar loss. Gradients accumulate
  // into .grad of every tensor with requires_grad on the path; grads of
  // off-path tensors stay zero/absent.
  void backward(const TensorPtr& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool recording() const { return record_; }

 private:
  struct Node {
    TensorPtr out;
    std::function<void()> back;
  };

  // Registers the backward closure when recording and some input needs grad.
  void push(const TensorPtr& out, bool needs_grad, std::function<void()> back);

  std::vector<Node> nodes_;
  bool record_;
};

// Parameter registry. Registration order is the serialization order, which
// keeps checkpoints byte-stable across runs.
struct ParamSet {
  std::vector<TensorPtr> params;

  TensorPtr add(const std::string& name, std::vector<int> shape);
  TensorPtr find(const std::string& name) const;
  void zero_grad();
  std::size_t total_size() const;
};

}  // namespace wtal::ad
