#pragma once

#include <cmath>
#include <cstddef>

#include "obsmae/model/params.hpp"

namespace obsmae::train {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are shaped after the parameter set on first use.
template <class S>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  void step(model::ParamSet<S>& params, const model::ParamSet<S>& grads) {
    if (m_.size() != params.size()) {
      m_ = params.zeros_like();
      v_ = params.zeros_like();
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(opt_.beta1), b2 = static_cast<S>(opt_.beta2);
    const S step = static_cast<S>(opt_.lr / bc1);
    const S inv_bc2 = static_cast<S>(1.0 / bc2);
    const S eps = static_cast<S>(opt_.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = grads[i];
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
      params[i].array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
    }
  }

  std::size_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  AdamOptions opt_;
  model::ParamSet<S> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace obsmae::train
