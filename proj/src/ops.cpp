#include "afx/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "afx/kernels.hpp"

namespace afx::ops {

namespace {

bool track(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void set_backward(Tensor& out, std::vector<Tensor> parents, std::function<void(TensorNode&)> fn) {
  out.node()->parents.reserve(parents.size());
  for (Tensor& p : parents) out.node()->parents.push_back(p.node_ptr());
  out.node()->backward = std::move(fn);
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": dtype mismatch (" + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()) + ")");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_string(t.shape()));
}

template <typename T>
void axpy(T* dst, const T* src, std::size_t n, T s) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += s * src[i];
}

template <typename T>
const T* dptr(TensorNode& n) {
  return node_data<T>(n).data();
}
template <typename T>
T* gptr(TensorNode& n) {
  return node_grad<T>(n).data();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  require_same_dtype(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), a.dtype(), track({&a, &b}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>();
    const T* pb = b.data<T>();
    T* po = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  });
  check_finite(out, "add");
  if (out.requires_grad()) {
    set_backward(out, {a, b}, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        for (int p = 0; p < 2; ++p) {
          TensorNode& parent = *self.parents[static_cast<std::size_t>(p)];
          if (!parent.requires_grad) continue;
          parent.ensure_grad();
          axpy(gptr<T>(parent), g, self.numel(), T(1));
        }
      });
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  require_same_dtype(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), a.dtype(), track({&a, &b}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>();
    const T* pb = b.data<T>();
    T* po = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  });
  check_finite(out, "sub");
  if (out.requires_grad()) {
    set_backward(out, {a, b}, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          axpy(gptr<T>(pa), g, self.numel(), T(1));
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          axpy(gptr<T>(pb), g, self.numel(), T(-1));
        }
      });
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  require_same_dtype(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), a.dtype(), track({&a, &b}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>();
    const T* pb = b.data<T>();
    T* po = out.data<T>();
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  });
  check_finite(out, "mul");
  if (out.requires_grad()) {
    set_backward(out, {a, b}, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          T* da = gptr<T>(pa);
          const T* vb = dptr<T>(pb);
          for (std::size_t i = 0; i < self.numel(); ++i) da[i] += g[i] * vb[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          T* db = gptr<T>(pb);
          const T* va = dptr<T>(pa);
          for (std::size_t i = 0; i < self.numel(); ++i) db[i] += g[i] * va[i];
        }
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype(), track({&a}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>();
    T* po = out.data<T>();
    T sv = static_cast<T>(s);
    for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * sv;
  });
  check_finite(out, "scale");
  if (out.requires_grad()) {
    set_backward(out, {a}, [s](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        axpy(gptr<T>(pa), gptr<T>(self), self.numel(), static_cast<T>(s));
      });
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  require_same_dtype(a, b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n}, a.dtype(), track({&a, &b}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::matmul_nn(a.data<T>(), b.data<T>(), out.data<T>(), m, k, n, false);
  });
  check_finite(out, "matmul");
  if (out.requires_grad()) {
    set_backward(out, {a, b}, [m, k, n](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          kernels::matmul_nt(g, dptr<T>(pb), gptr<T>(pa), m, n, k, true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          kernels::matmul_tn(dptr<T>(pa), g, gptr<T>(pb), k, m, n, true);
        }
      });
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  require_same_dtype(a, b, "matmul_nt");
  if (a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + "^T");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out = Tensor::zeros({m, n}, a.dtype(), track({&a, &b}));
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::matmul_nt(a.data<T>(), b.data<T>(), out.data<T>(), m, k, n, false);
  });
  check_finite(out, "matmul_nt");
  if (out.requires_grad()) {
    set_backward(out, {a, b}, [m, k, n](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& pa = *self.parents[0];
        TensorNode& pb = *self.parents[1];
        if (pa.requires_grad) {
          pa.ensure_grad();
          kernels::matmul_nn(g, dptr<T>(pb), gptr<T>(pa), m, n, k, true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          kernels::matmul_tn(g, dptr<T>(pa), gptr<T>(pb), n, m, k, true);
        }
      });
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  if (x.dim(1) != w.dim(0))
    throw ShapeError("linear: input dim " + shape_string(x.shape()) + " does not match weight " +
                     shape_string(w.shape()));
  if (b.rank() != 1 || b.dim(0) != w.dim(1))
    throw ShapeError("linear: bias " + shape_string(b.shape()) + " does not match weight " +
                     shape_string(w.shape()));
  require_same_dtype(x, w, "linear");
  require_same_dtype(x, b, "linear");
  const int rows = x.dim(0), din = x.dim(1), dout = w.dim(1);
  Tensor out = Tensor::zeros({rows, dout}, x.dtype(), track({&x, &w, &b}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.data<T>();
    const T* pb = b.data<T>();
    for (int i = 0; i < rows; ++i)
      std::copy(pb, pb + dout, po + static_cast<std::size_t>(i) * dout);
    kernels::matmul_nn(x.data<T>(), w.data<T>(), po, rows, din, dout, true);
  });
  check_finite(out, "linear");
  if (out.requires_grad()) {
    set_backward(out, {x, w, b}, [rows, din, dout](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& px = *self.parents[0];
        TensorNode& pw = *self.parents[1];
        TensorNode& pb = *self.parents[2];
        if (px.requires_grad) {
          px.ensure_grad();
          kernels::matmul_nt(g, dptr<T>(pw), gptr<T>(px), rows, dout, din, true);
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          kernels::matmul_tn(dptr<T>(px), g, gptr<T>(pw), din, rows, dout, true);
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          T* db = gptr<T>(pb);
          for (int i = 0; i < rows; ++i)
            axpy(db, g + static_cast<std::size_t>(i) * dout, static_cast<std::size_t>(dout), T(1));
        }
      });
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::gelu(x.data<T>(), out.data<T>(), x.numel());
  });
  check_finite(out, "gelu");
  if (out.requires_grad()) {
    set_backward(out, {x}, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        kernels::gelu_backward(dptr<T>(px), gptr<T>(self), gptr<T>(px), self.numel());
      });
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
  for (int i = axis + 1; i < r; ++i) inner *= static_cast<std::size_t>(x.dim(i));
  const int len = x.dim(axis);
  Tensor out = Tensor::zeros(x.shape(), x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::softmax_lanes(x.data<T>(), out.data<T>(), outer, len, inner);
  });
  check_finite(out, "softmax");
  if (out.requires_grad()) {
    set_backward(out, {x}, [outer, len, inner](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T* y = dptr<T>(self);
        const T* dy = gptr<T>(self);
        T* dx = gptr<T>(px);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            std::size_t base = o * static_cast<std::size_t>(len) * inner + in;
            T dot = T(0);
            for (int i = 0; i < len; ++i) {
              std::size_t idx = base + static_cast<std::size_t>(i) * inner;
              dot += y[idx] * dy[idx];
            }
            for (int i = 0; i < len; ++i) {
              std::size_t idx = base + static_cast<std::size_t>(i) * inner;
              dx[idx] += y[idx] * (dy[idx] - dot);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor softmax_causal(const Tensor& x) {
  require_rank2(x, "softmax_causal");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros(x.shape(), x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::softmax_rows_causal(x.data<T>(), out.data<T>(), rows, cols, 0);
  });
  check_finite(out, "softmax_causal");
  if (out.requires_grad()) {
    set_backward(out, {x}, [rows, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T* y = dptr<T>(self);
        const T* dy = gptr<T>(self);
        T* dx = gptr<T>(px);
        for (int i = 0; i < rows; ++i) {
          std::size_t base = static_cast<std::size_t>(i) * cols;
          T dot = T(0);
          for (int j = 0; j < cols; ++j) dot += y[base + j] * dy[base + j];
          for (int j = 0; j < cols; ++j) dx[base + j] += y[base + j] * (dy[base + j] - dot);
        }
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const int rows = x.dim(0), cols = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != cols || bias.rank() != 1 || bias.dim(0) != cols)
    throw ShapeError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not match row width " + std::to_string(cols));
  require_same_dtype(x, gain, "layer_norm");
  require_same_dtype(x, bias, "layer_norm");
  Tensor out = Tensor::zeros(x.shape(), x.dtype(), track({&x, &gain, &bias}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kernels::layer_norm_rows(x.data<T>(), gain.data<T>(), bias.data<T>(), out.data<T>(), rows, cols,
                             static_cast<T>(eps));
  });
  check_finite(out, "layer_norm");
  if (out.requires_grad()) {
    set_backward(out, {x, gain, bias}, [rows, cols, eps](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        TensorNode& pg = *self.parents[1];
        TensorNode& pb = *self.parents[2];
        const T* xv = dptr<T>(px);
        const T* gv = dptr<T>(pg);
        const T* dy = gptr<T>(self);
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < rows; ++i) {
          std::size_t base = static_cast<std::size_t>(i) * cols;
          T mean = T(0);
          for (int j = 0; j < cols; ++j) mean += xv[base + j];
          mean /= static_cast<T>(cols);
          T var = T(0);
          for (int j = 0; j < cols; ++j) {
            T d = xv[base + j] - mean;
            var += d * d;
          }
          var /= static_cast<T>(cols);
          T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
          T dhat_mean = T(0), dhat_xhat_mean = T(0);
          for (int j = 0; j < cols; ++j) {
            T xhat = (xv[base + j] - mean) * inv;
            T dhat = dy[base + j] * gv[j];
            dhat_mean += dhat;
            dhat_xhat_mean += dhat * xhat;
          }
          dhat_mean /= static_cast<T>(cols);
          dhat_xhat_mean /= static_cast<T>(cols);
          for (int j = 0; j < cols; ++j) {
            T xhat = (xv[base + j] - mean) * inv;
            if (px.requires_grad) {
              T dhat = dy[base + j] * gv[j];
              gptr<T>(px)[base + j] += inv * (dhat - dhat_mean - xhat * dhat_xhat_mean);
            }
            if (pg.requires_grad) gptr<T>(pg)[j] += dy[base + j] * xhat;
            if (pb.requires_grad) gptr<T>(pb)[j] += dy[base + j];
          }
        }
      });
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({1}, x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T s = T(0);
    for (std::size_t i = 0; i < x.numel(); ++i) s += px[i];
    out.data<T>()[0] = s;
  });
  check_finite(out, "sum_all");
  if (out.requires_grad()) {
    set_backward(out, {x}, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        T g = gptr<T>(self)[0];
        T* dx = gptr<T>(px);
        for (std::size_t i = 0; i < px.numel(); ++i) dx[i] += g;
      });
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros({1, cols}, x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T* po = out.data<T>();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) po[j] += px[static_cast<std::size_t>(i) * cols + j];
    for (int j = 0; j < cols; ++j) po[j] /= static_cast<T>(rows);
  });
  check_finite(out, "mean_rows");
  if (out.requires_grad()) {
    set_backward(out, {x}, [rows, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T* g = gptr<T>(self);
        T* dx = gptr<T>(px);
        T invr = T(1) / static_cast<T>(rows);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) dx[static_cast<std::size_t>(i) * cols + j] += g[j] * invr;
      });
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int cols = parts[0].dim(1);
  int rows = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != cols)
      throw ShapeError("concat_rows: column mismatch " + shape_string(p.shape()) + " vs " +
                       shape_string(parts[0].shape()));
    require_same_dtype(p, parts[0], "concat_rows");
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({rows, cols}, parts[0].dtype(), grad_enabled() && rg);
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.data<T>();
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      const T* pp = p.data<T>();
      std::copy(pp, pp + p.numel(), po + off);
      off += p.numel();
    }
  });
  if (out.requires_grad()) {
    set_backward(out, parts, [](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        std::size_t off = 0;
        for (auto& pp : self.parents) {
          TensorNode& p = *pp;
          if (p.requires_grad) {
            p.ensure_grad();
            axpy(gptr<T>(p), g + off, p.numel(), T(1));
          }
          off += p.numel();
        }
      });
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int start, int len) {
  require_rank2(x, "slice_rows");
  if (start < 0 || len <= 0 || start + len > x.dim(0))
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") invalid for " + shape_string(x.shape()));
  const int cols = x.dim(1);
  Tensor out = Tensor::zeros({len, cols}, x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>() + static_cast<std::size_t>(start) * cols;
    std::copy(px, px + out.numel(), out.data<T>());
  });
  if (out.requires_grad()) {
    set_backward(out, {x}, [start, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        axpy(gptr<T>(px) + static_cast<std::size_t>(start) * cols, gptr<T>(self), self.numel(), T(1));
      });
    });
  }
  return out;
}

Tensor narrow_cols(const Tensor& x, int start, int len) {
  require_rank2(x, "narrow_cols");
  if (start < 0 || len <= 0 || start + len > x.dim(1))
    throw ShapeError("narrow_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") invalid for " + shape_string(x.shape()));
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros({rows, len}, x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T* po = out.data<T>();
    for (int i = 0; i < rows; ++i)
      std::copy(px + static_cast<std::size_t>(i) * cols + start,
                px + static_cast<std::size_t>(i) * cols + start + len,
                po + static_cast<std::size_t>(i) * len);
  });
  if (out.requires_grad()) {
    set_backward(out, {x}, [rows, cols, start, len](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T* g = gptr<T>(self);
        T* dx = gptr<T>(px);
        for (int i = 0; i < rows; ++i)
          axpy(dx + static_cast<std::size_t>(i) * cols + start,
               g + static_cast<std::size_t>(i) * len, static_cast<std::size_t>(len), T(1));
      });
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  int rows = parts[0].dim(0);
  int cols = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_string(p.shape()) + " vs " +
                       shape_string(parts[0].shape()));
    require_same_dtype(p, parts[0], "concat_cols");
    cols += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({rows, cols}, parts[0].dtype(), grad_enabled() && rg);
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.data<T>();
    int coff = 0;
    for (const Tensor& p : parts) {
      const T* pp = p.data<T>();
      int pc = p.dim(1);
      for (int i = 0; i < rows; ++i)
        std::copy(pp + static_cast<std::size_t>(i) * pc, pp + static_cast<std::size_t>(i + 1) * pc,
                  po + static_cast<std::size_t>(i) * cols + coff);
      coff += pc;
    }
  });
  if (out.requires_grad()) {
    set_backward(out, parts, [rows, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        int coff = 0;
        for (auto& pp : self.parents) {
          TensorNode& p = *pp;
          int pc = p.shape[1];
          if (p.requires_grad) {
            p.ensure_grad();
            T* dp = gptr<T>(p);
            for (int i = 0; i < rows; ++i)
              axpy(dp + static_cast<std::size_t>(i) * pc,
                   g + static_cast<std::size_t>(i) * cols + coff, static_cast<std::size_t>(pc),
                   T(1));
          }
          coff += pc;
        }
      });
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  require_rank2(x, "scale_rows");
  std::size_t srows = s.numel();
  if (srows != static_cast<std::size_t>(x.dim(0)))
    throw ShapeError("scale_rows: " + shape_string(s.shape()) + " scales do not match rows of " +
                     shape_string(x.shape()));
  require_same_dtype(x, s, "scale_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros(x.shape(), x.dtype(), track({&x, &s}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    const T* ps = s.data<T>();
    T* po = out.data<T>();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        po[static_cast<std::size_t>(i) * cols + j] = px[static_cast<std::size_t>(i) * cols + j] * ps[i];
  });
  check_finite(out, "scale_rows");
  if (out.requires_grad()) {
    set_backward(out, {x, s}, [rows, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* g = gptr<T>(self);
        TensorNode& px = *self.parents[0];
        TensorNode& ps = *self.parents[1];
        if (px.requires_grad) {
          px.ensure_grad();
          T* dx = gptr<T>(px);
          const T* sv = dptr<T>(ps);
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
              dx[static_cast<std::size_t>(i) * cols + j] += g[static_cast<std::size_t>(i) * cols + j] * sv[i];
        }
        if (ps.requires_grad) {
          ps.ensure_grad();
          T* ds = gptr<T>(ps);
          const T* xv = dptr<T>(px);
          for (int i = 0; i < rows; ++i) {
            T dot = T(0);
            for (int j = 0; j < cols; ++j)
              dot += g[static_cast<std::size_t>(i) * cols + j] * xv[static_cast<std::size_t>(i) * cols + j];
            ds[i] += dot;
          }
        }
      });
    });
  }
  return out;
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  require_rank2(table, "embedding_rows");
  if (ids.empty()) throw ShapeError("embedding_rows: empty id list");
  const int vocab = table.dim(0), dim = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw ShapeError("embedding_rows: id " + std::to_string(id) + " outside table of " +
                       std::to_string(vocab));
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), dim}, table.dtype(), track({&table}));
  dispatch(table.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pt = table.data<T>();
    T* po = out.data<T>();
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(pt + static_cast<std::size_t>(ids[i]) * dim,
                pt + static_cast<std::size_t>(ids[i] + 1) * dim, po + i * dim);
  });
  if (out.requires_grad()) {
    set_backward(out, {table}, [ids, dim](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& pt = *self.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        const T* g = gptr<T>(self);
        T* dt = gptr<T>(pt);
        for (std::size_t i = 0; i < ids.size(); ++i)
          axpy(dt + static_cast<std::size_t>(ids[i]) * dim, g + i * dim,
               static_cast<std::size_t>(dim), T(1));
      });
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require_rank2(x, "gather_rows");
  if (idx.empty()) throw ShapeError("gather_rows: empty index list");
  const int rows = x.dim(0), cols = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " outside " +
                       shape_string(x.shape()));
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), cols}, x.dtype(), track({&x}));
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>();
    T* po = out.data<T>();
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy(px + static_cast<std::size_t>(idx[i]) * cols,
                px + static_cast<std::size_t>(idx[i] + 1) * cols, po + i * cols);
  });
  if (out.requires_grad()) {
    set_backward(out, {x}, [idx, cols](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& px = *self.parents[0];
        if (!px.requires_grad) return;
        px.ensure_grad();
        const T* g = gptr<T>(self);
        T* dx = gptr<T>(px);
        for (std::size_t i = 0; i < idx.size(); ++i)
          axpy(dx + static_cast<std::size_t>(idx[i]) * cols, g + i * cols,
               static_cast<std::size_t>(cols), T(1));
      });
    });
  }
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets) {
  require_rank2(logits, "cross_entropy");
  const int rows = logits.dim(0), vocab = logits.dim(1);
  if (static_cast<int>(targets.size()) != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_string(logits.shape()));
  for (int t : targets)
    if (t < 0 || t >= vocab)
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside vocab " +
                       std::to_string(vocab));
  Tensor out = Tensor::zeros({1}, logits.dtype(), track({&logits}));
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = logits.data<T>();
    T total = T(0);
    for (int i = 0; i < rows; ++i) {
      const T* rowp = px + static_cast<std::size_t>(i) * vocab;
      T mx = rowp[0];
      for (int j = 1; j < vocab; ++j)
        if (rowp[j] > mx) mx = rowp[j];
      T sum = T(0);
      for (int j = 0; j < vocab; ++j) sum += std::exp(rowp[j] - mx);
      total += mx + std::log(sum) - rowp[targets[static_cast<std::size_t>(i)]];
    }
    out.data<T>()[0] = total / static_cast<T>(rows);
  });
  check_finite(out, "cross_entropy");
  if (out.requires_grad()) {
    set_backward(out, {logits}, [targets, rows, vocab](TensorNode& self) {
      dispatch(self.dtype, [&](auto tag) {
        using T = decltype(tag);
        TensorNode& pl = *self.parents[0];
        if (!pl.requires_grad) return;
        pl.ensure_grad();
        const T* px = dptr<T>(pl);
        T* dx = gptr<T>(pl);
        T g = gptr<T>(self)[0] / static_cast<T>(rows);
        for (int i = 0; i < rows; ++i) {
          const T* rowp = px + static_cast<std::size_t>(i) * vocab;
          T* rowd = dx + static_cast<std::size_t>(i) * vocab;
          T mx = rowp[0];
          for (int j = 1; j < vocab; ++j)
            if (rowp[j] > mx) mx = rowp[j];
          T sum = T(0);
          for (int j = 0; j < vocab; ++j) sum += std::exp(rowp[j] - mx);
          for (int j = 0; j < vocab; ++j) {
            T p = std::exp(rowp[j] - mx) / sum;
            rowd[j] += g * (p - (j == targets[static_cast<std::size_t>(i)] ? T(1) : T(0)));
          }
        }
      });
    });
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, bool causal,
                 std::vector<Tensor>* weights_out) {
  require_rank2(q, "attention");
  require_rank2(k, "attention");
  require_rank2(v, "attention");
  const int d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d)
    throw ShapeError("attention: feature dims disagree, q " + shape_string(q.shape()) + " k " +
                     shape_string(k.shape()) + " v " + shape_string(v.shape()));
  if (k.dim(0) != v.dim(0))
    throw ShapeError("attention: key/value lengths disagree, " + shape_string(k.shape()) + " vs " +
                     shape_string(v.shape()));
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("attention: dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  const int dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = narrow_cols(q, h * dh, dh);
    Tensor kh = narrow_cols(k, h * dh, dh);
    Tensor vh = narrow_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv_scale);
    Tensor w = causal ? softmax_causal(scores) : softmax(scores, 1);
    if (weights_out) weights_out->push_back(w);
    outs.push_back(matmul(w, vh));
  }
  return heads == 1 ? outs[0] : concat_cols(outs);
}

}  // namespace afx::ops
