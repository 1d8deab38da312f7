#pragma once

#include <cstddef>
#include <string>

#include "afx/error.hpp"

namespace afx {

enum class DType { F32, F64 };

inline std::size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

inline DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::F32;
  if (name == "f64") return DType::F64;
  throw ConfigError("unknown dtype name: " + name);
}

}  // namespace afx
