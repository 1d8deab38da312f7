#include "afx/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace afx {

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static std::shared_ptr<TensorNode> make_node(std::vector<int> shape, DType dt, bool rg) {
  for (int d : shape)
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->dtype = dt;
  n->requires_grad = rg;
  if (dt == DType::F32)
    n->f32.assign(n->numel(), 0.0f);
  else
    n->f64.assign(n->numel(), 0.0);
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, DType dt, bool requires_grad) {
  return Tensor(make_node(std::move(shape), dt, requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double value, DType dt) {
  Tensor t = zeros(std::move(shape), dt, false);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, value);
  return t;
}

Tensor Tensor::from_values(std::vector<int> shape, const std::vector<double>& values, DType dt,
                           bool requires_grad) {
  Tensor t = zeros(std::move(shape), dt, requires_grad);
  if (values.size() != t.numel())
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                     shape_string(t.shape()));
  for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
  return t;
}

Tensor Tensor::identity(int n, DType dt) {
  Tensor t = zeros({n, n}, dt, false);
  for (int i = 0; i < n; ++i) t.set(static_cast<std::size_t>(i) * n + i, 1.0);
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, DType dt, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dt, requires_grad);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal() * stddev);
  return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

double Tensor::at(std::size_t i) const {
  return node_->dtype == DType::F32 ? static_cast<double>(node_->f32[i]) : node_->f64[i];
}

void Tensor::set(std::size_t i, double v) {
  if (node_->dtype == DType::F32)
    node_->f32[i] = static_cast<float>(v);
  else
    node_->f64[i] = v;
}

double Tensor::grad_at(std::size_t i) const {
  if (!node_->has_grad()) return 0.0;
  return node_->dtype == DType::F32 ? static_cast<double>(node_->grad32[i]) : node_->grad64[i];
}

void Tensor::zero_grad() {
  node_->grad32.clear();
  node_->grad64.clear();
}

std::vector<double> Tensor::to_doubles() const {
  std::vector<double> out(numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

std::vector<double> Tensor::grad_to_doubles() const {
  std::vector<double> out(numel(), 0.0);
  if (node_->has_grad())
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad_at(i);
  return out;
}

Tensor Tensor::detach_copy() const {
  Tensor t = zeros(shape(), dtype(), false);
  t.node()->f32 = node_->f32;
  t.node()->f64 = node_->f64;
  return t;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  Tensor t = zeros(std::move(new_shape), dtype(), false);
  if (t.numel() != numel())
    throw ShapeError("reshape: element count mismatch " + shape_string(shape()) + " -> " +
                     shape_string(t.shape()));
  t.node()->f32 = node_->f32;
  t.node()->f64 = node_->f64;
  return t;
}

bool Tensor::same_bits(const Tensor& other) const {
  if (shape() != other.shape() || dtype() != other.dtype()) return false;
  if (dtype() == DType::F32)
    return std::memcmp(node_->f32.data(), other.node_->f32.data(), numel() * 4) == 0;
  return std::memcmp(node_->f64.data(), other.node_->f64.data(), numel() * 8) == 0;
}

// --- autograd -------------------------------------------------------------

static bool g_grad_enabled = true;
static bool g_finite_checks = true;

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool on) { g_finite_checks = on; }

void check_finite(const Tensor& t, const char* op) {
  if (!g_finite_checks) return;
  const TensorNode& n = *t.node();
  if (n.dtype == DType::F32) {
    for (float v : n.f32)
      if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  } else {
    for (double v : n.f64)
      if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) throw ShapeError("backward: loss does not require grad");

  // Iterative depth-first post-order; visit order depends only on the graph
  // structure, so replays are deterministic.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  visited.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  if (loss.dtype() == DType::F32)
    loss.node()->grad32[0] = 1.0f;
  else
    loss.node()->grad64[0] = 1.0;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

}  // namespace afx
