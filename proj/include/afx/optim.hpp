#pragma once

#include <map>
#include <string>

#include "afx/params.hpp"
#include "afx/tensor.hpp"

namespace afx {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
// node, so one optimizer can serve several parameter groups; reset() drops
// state when a group is (re)activated.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  const AdamWConfig& config() const { return cfg_; }

  // Applies one update to every parameter that holds a gradient.
  // `label` names the parameter group in error messages.
  void step(const ParamList& params, const std::string& label = "");

  void reset() { state_.clear(); }
  // Drops moment state for the given parameters (group re-activation).
  void forget(const ParamList& params) {
    for (const NamedParam& p : params) state_.erase(p.tensor.node());
  }
  long step_count(const Tensor& param) const;

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    long step = 0;
  };
  AdamWConfig cfg_;
  std::map<const TensorNode*, Moments> state_;
};

}  // namespace afx
