#pragma once

#include <string>

#include "afx/params.hpp"

namespace afx {

// Container layout: a UTF-8 manifest (one line per tensor: name, dtype,
// shape) followed by the raw little-endian scalar payloads in manifest order.
void save_checkpoint(const std::string& path, const ParamList& tensors);

ParamList load_checkpoint(const std::string& path);

// Copies checkpoint contents into an existing parameter set by name.
// Any difference between the two manifests (missing, unexpected, or
// mismatched entries) is reported in the thrown error.
void load_checkpoint_into(const std::string& path, const ParamList& dest);

}  // namespace afx
