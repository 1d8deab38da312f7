#pragma once

#include <string>
#include <vector>

#include "afx/tensor.hpp"

namespace afx {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

inline void zero_grads(const ParamList& params) {
  for (const NamedParam& p : params) const_cast<Tensor&>(p.tensor).zero_grad();
}

// Detached snapshot, used by freeze-correctness checks.
inline ParamList snapshot(const ParamList& params) {
  ParamList out;
  out.reserve(params.size());
  for (const NamedParam& p : params) out.push_back({p.name, p.tensor.detach_copy()});
  return out;
}

// Names of parameters whose bits changed relative to a snapshot.
std::vector<std::string> changed_params(const ParamList& before, const ParamList& after);

}  // namespace afx
