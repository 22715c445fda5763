#pragma once

#include <vector>

#include "wtal/tensor.hpp"

namespace wtal::ad {

// Adam with bias correction. One optimizer instance owns the moment buffers
// for a fixed parameter list; the step counter is shared across parameters
// so checkpoint/restore keeps the schedule intact.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<TensorPtr> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the accumulated gradients. A parameter whose
  // gradient was never touched this step is treated as zero gradient.
  // Throws NumericError naming the parameter if a gradient is non-finite.
  void step();

  void zero_grad();

  long step_count() const { return step_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  std::vector<TensorPtr> params_;
  std::vector<Moments> moments_;
  long step_ = 0;
  double lr_, beta1_, beta2_, eps_;
};

}  // namespace wtal::ad
