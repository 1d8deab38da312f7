#pragma once

#include <cmath>
#include <cstddef>

// Dense numeric inner loops. The OpenMP versions in afx::kernels partition work
// over independent output elements only, and every output element accumulates
// in the same order as the serial reference in afx::kernels::serial, so the two
// are bitwise identical for any thread count.

namespace afx::kernels {

// Minimum number of scalar operations before a loop goes parallel.
inline std::size_t omp_grain = 1u << 15;

constexpr double kGeluCoeff = 0.7978845608028654;  // sqrt(2/pi), tanh approximation
constexpr double kGeluCubic = 0.044715;

template <typename T>
inline T gelu_scalar(T x) {
  T u = static_cast<T>(kGeluCoeff) * (x + static_cast<T>(kGeluCubic) * x * x * x);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
  T c = static_cast<T>(kGeluCoeff);
  T u = c * (x + static_cast<T>(kGeluCubic) * x * x * x);
  T t = std::tanh(u);
  T sech2 = static_cast<T>(1) - t * t;
  T du = c * (static_cast<T>(1) + static_cast<T>(3 * kGeluCubic) * x * x);
  return static_cast<T>(0.5) * (static_cast<T>(1) + t) + static_cast<T>(0.5) * x * sech2 * du;
}

namespace serial {

// c = a[m x k] * b[k x n], naive triple loop, accumulate when acc.
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * n + j] : T(0);
      for (int l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
      c[i * n + j] = s;
    }
  }
}

// c[m x n] = a[m x k] * b[n x k]^T.
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * n + j] : T(0);
      for (int l = 0; l < k; ++l) s += a[i * k + l] * b[j * k + l];
      c[i * n + j] = s;
    }
  }
}

// c[m x n] = a[k x m]^T * b[k x n].
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T s = acc ? c[i * n + j] : T(0);
      for (int l = 0; l < k; ++l) s += a[l * m + i] * b[l * n + j];
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void gelu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

// Softmax over `len` entries per lane; lanes laid out as [outer, len, inner].
template <typename T>
void softmax_lanes(const T* x, T* y, std::size_t outer, int len, std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const T* xs = x + o * len * inner + in;
      T* ys = y + o * len * inner + in;
      T mx = xs[0];
      for (int i = 1; i < len; ++i)
        if (xs[static_cast<std::size_t>(i) * inner] > mx) mx = xs[static_cast<std::size_t>(i) * inner];
      T sum = T(0);
      for (int i = 0; i < len; ++i) {
        T e = std::exp(xs[static_cast<std::size_t>(i) * inner] - mx);
        ys[static_cast<std::size_t>(i) * inner] = e;
        sum += e;
      }
      for (int i = 0; i < len; ++i) ys[static_cast<std::size_t>(i) * inner] /= sum;
    }
  }
}

// Row-wise softmax where row i only sees columns <= i + offset; masked
// entries come out exactly zero.
template <typename T>
void softmax_rows_causal(const T* x, T* y, int rows, int cols, int offset) {
  for (int i = 0; i < rows; ++i) {
    int lim = i + offset + 1;
    if (lim > cols) lim = cols;
    const T* xs = x + static_cast<std::size_t>(i) * cols;
    T* ys = y + static_cast<std::size_t>(i) * cols;
    T mx = xs[0];
    for (int j = 1; j < lim; ++j)
      if (xs[j] > mx) mx = xs[j];
    T sum = T(0);
    for (int j = 0; j < lim; ++j) {
      T e = std::exp(xs[j] - mx);
      ys[j] = e;
      sum += e;
    }
    for (int j = 0; j < lim; ++j) ys[j] /= sum;
    for (int j = lim; j < cols; ++j) ys[j] = T(0);
  }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int cols, T eps) {
  for (int i = 0; i < rows; ++i) {
    const T* xs = x + static_cast<std::size_t>(i) * cols;
    T* ys = y + static_cast<std::size_t>(i) * cols;
    T mean = T(0);
    for (int j = 0; j < cols; ++j) mean += xs[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (int j = 0; j < cols; ++j) {
      T d = xs[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    T inv = T(1) / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) ys[j] = (xs[j] - mean) * inv * gain[j] + bias[j];
  }
}

template <typename T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                  T weight_decay, long step) {
  T bc1 = T(1) - std::pow(beta1, static_cast<T>(step));
  T bc2 = T(1) - std::pow(beta2, static_cast<T>(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace serial

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  std::size_t work = static_cast<std::size_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (int i = 0; i < m; ++i) {
    T* cr = c + static_cast<std::size_t>(i) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) cr[j] = T(0);
    const T* ar = a + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      T av = ar[l];
      const T* br = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  std::size_t work = static_cast<std::size_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<std::size_t>(i) * k;
    T* cr = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      T s = acc ? cr[j] : T(0);
      const T* br = b + static_cast<std::size_t>(j) * k;
      for (int l = 0; l < k; ++l) s += ar[l] * br[l];
      cr[j] = s;
    }
  }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int m, int k, int n, bool acc) {
  std::size_t work = static_cast<std::size_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (int i = 0; i < m; ++i) {
    T* cr = c + static_cast<std::size_t>(i) * n;
    if (!acc)
      for (int j = 0; j < n; ++j) cr[j] = T(0);
    for (int l = 0; l < k; ++l) {
      T av = a[static_cast<std::size_t>(l) * m + i];
      const T* br = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

template <typename T>
void gelu(const T* x, T* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= omp_grain)
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

template <typename T>
void gelu_backward(const T* x, const T* dy, T* dx, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= omp_grain)
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

template <typename T>
void softmax_lanes(const T* x, T* y, std::size_t outer, int len, std::size_t inner) {
  std::size_t work = outer * len * inner;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (std::size_t o = 0; o < outer; ++o)
    serial::softmax_lanes(x + o * len * inner, y + o * len * inner, 1, len, inner);
}

template <typename T>
void softmax_rows_causal(const T* x, T* y, int rows, int cols, int offset) {
  std::size_t work = static_cast<std::size_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (int i = 0; i < rows; ++i)
    serial::softmax_rows_causal(x + static_cast<std::size_t>(i) * cols,
                                y + static_cast<std::size_t>(i) * cols, 1, cols, offset + i);
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, int rows, int cols, T eps) {
  std::size_t work = static_cast<std::size_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= omp_grain)
  for (int i = 0; i < rows; ++i)
    serial::layer_norm_rows(x + static_cast<std::size_t>(i) * cols, gain, bias,
                            y + static_cast<std::size_t>(i) * cols, 1, cols, eps);
}

template <typename T>
void adamw_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                  T weight_decay, long step) {
  T bc1 = T(1) - std::pow(beta1, static_cast<T>(step));
  T bc2 = T(1) - std::pow(beta2, static_cast<T>(step));
#pragma omp parallel for schedule(static) if (n >= omp_grain)
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    T mhat = m[i] / bc1;
    T vhat = v[i] / bc2;
    p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
  }
}

}  // namespace afx::kernels
