#include "afx/optim.hpp"

#include <cmath>

#include "afx/error.hpp"
#include "afx/kernels.hpp"

namespace afx {

std::vector<std::string> changed_params(const ParamList& before, const ParamList& after) {
  std::vector<std::string> changed;
  for (std::size_t i = 0; i < before.size() && i < after.size(); ++i)
    if (!before[i].tensor.same_bits(after[i].tensor)) changed.push_back(after[i].name);
  return changed;
}

void AdamW::step(const ParamList& params, const std::string& label) {
  for (const NamedParam& np : params) {
    Tensor p = np.tensor;
    if (!p.has_grad()) continue;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      if (!std::isfinite(p.grad_at(i)))
        throw NumericError("adamw: non-finite gradient in '" + np.name +
                           (label.empty() ? "" : "' of group '" + label) + "'");
    }
    Moments& mom = state_[p.node()];
    if (!mom.m.defined()) {
      mom.m = Tensor::zeros(p.shape(), p.dtype());
      mom.v = Tensor::zeros(p.shape(), p.dtype());
    }
    mom.step += 1;
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kernels::adamw_update(p.data<T>(), p.grad_data<T>(), mom.m.data<T>(), mom.v.data<T>(),
                            p.numel(), static_cast<T>(cfg_.lr), static_cast<T>(cfg_.beta1),
                            static_cast<T>(cfg_.beta2), static_cast<T>(cfg_.eps),
                            static_cast<T>(cfg_.weight_decay), mom.step);
    });
  }
}

long AdamW::step_count(const Tensor& param) const {
  auto it = state_.find(param.node());
  return it == state_.end() ? 0 : it->second.step;
}

}  // namespace afx
