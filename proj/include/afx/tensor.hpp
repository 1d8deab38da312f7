#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "afx/dtype.hpp"
#include "afx/error.hpp"
#include "afx/rng.hpp"

namespace afx {

class Tensor;

// One node of the recorded computation graph. Creation order is a
// topological order, and backward() replays it in exact reverse.
struct TensorNode {
  std::vector<int> shape;
  DType dtype = DType::F32;
  bool requires_grad = false;

  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<float> grad32;
  std::vector<double> grad64;

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
  bool has_grad() const { return !grad32.empty() || !grad64.empty(); }
  void ensure_grad() {
    if (has_grad()) return;
    if (dtype == DType::F32)
      grad32.assign(numel(), 0.0f);
    else
      grad64.assign(numel(), 0.0);
  }
};

template <typename T>
std::vector<T>& node_data(TensorNode& n);
template <>
inline std::vector<float>& node_data<float>(TensorNode& n) { return n.f32; }
template <>
inline std::vector<double>& node_data<double>(TensorNode& n) { return n.f64; }

template <typename T>
std::vector<T>& node_grad(TensorNode& n);
template <>
inline std::vector<float>& node_grad<float>(TensorNode& n) { return n.grad32; }
template <>
inline std::vector<double>& node_grad<double>(TensorNode& n) { return n.grad64; }

// Runs f with a value of the scalar type selected by dt.
template <typename F>
decltype(auto) dispatch(DType dt, F&& f) {
  if (dt == DType::F32) return f(float{});
  return f(double{});
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, DType dt = DType::F32, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, DType dt = DType::F32);
  static Tensor from_values(std::vector<int> shape, const std::vector<double>& values,
                            DType dt = DType::F32, bool requires_grad = false);
  static Tensor identity(int n, DType dt = DType::F32);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev, DType dt = DType::F32,
                      bool requires_grad = false);
  static Tensor scalar(double value, DType dt = DType::F32);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return node_->numel(); }
  DType dtype() const { return node_->dtype; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  template <typename T>
  T* data() { return node_data<T>(*node_).data(); }
  template <typename T>
  const T* data() const { return node_data<T>(*node_).data(); }
  template <typename T>
  T* grad_data() { return node_grad<T>(*node_).data(); }

  // Generic element access; converts through double.
  double at(std::size_t i) const;
  void set(std::size_t i, double v);
  double at2(int r, int c) const { return at(static_cast<std::size_t>(r) * dim(1) + c); }

  bool has_grad() const { return node_->has_grad(); }
  double grad_at(std::size_t i) const;
  void zero_grad();

  std::vector<double> to_doubles() const;
  std::vector<double> grad_to_doubles() const;

  // Fresh leaf tensor with the same contents and no history.
  Tensor detach_copy() const;
  // Same data buffer reinterpreted with a new shape (copies; leaf only).
  Tensor reshaped(std::vector<int> new_shape) const;

  bool same_bits(const Tensor& other) const;

  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> node_ptr() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

std::string shape_string(const std::vector<int>& shape);

// --- autograd -------------------------------------------------------------

bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  bool prev_;
};

bool finite_checks_enabled();
void set_finite_checks(bool on);
void check_finite(const Tensor& t, const char* op);

// Backpropagate from a scalar loss through the recorded graph.
void backward(const Tensor& loss);

}  // namespace afx
