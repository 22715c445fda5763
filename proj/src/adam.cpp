#include "wtal/adam.hpp"

#include <cmath>
#include <utility>

#include "wtal/errors.hpp"
#include "wtal/kernels.hpp"

namespace wtal::ad {

AdamOptimizer::AdamOptimizer(std::vector<TensorPtr> params, double lr,
                             double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  if (!(lr_ > 0.0)) throw ParameterError("adam: learning rate must be positive");
  if (!(beta1_ >= 0.0 && beta1_ < 1.0) || !(beta2_ >= 0.0 && beta2_ < 1.0))
    throw ParameterError("adam: betas must lie in [0, 1)");
  moments_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moments_[i].m.assign(params_[i]->size(), 0.0);
    moments_[i].v.assign(params_[i]->size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    p.ensure_grad();
    for (double g : p.grad)
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in parameter '" +
                           (p.name.empty() ? std::string("<unnamed>") : p.name) +
                           "'");
    kern::adam_update(p.size(), p.data.data(), p.grad.data(),
                      moments_[i].m.data(), moments_[i].v.data(), step_, lr_,
                      beta1_, beta2_, eps_);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) {
    p->grad.assign(p->size(), 0.0);
    p->grad_live = false;
  }
}

}  // namespace wtal::ad
