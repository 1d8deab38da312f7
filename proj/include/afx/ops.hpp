#pragma once

#include <vector>

#include "afx/tensor.hpp"

namespace afx::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);     // a[m,k] * b[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[m,k] * b[n,k]^T
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);
Tensor softmax_causal(const Tensor& x);  // square score matrix, row i sees cols <= i
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_rows(const Tensor& x);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int start, int len);
Tensor narrow_cols(const Tensor& x, int start, int len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor scale_rows(const Tensor& x, const Tensor& s);  // x[r,c] * s[r] per row

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// Mean negative log-likelihood (nats) of targets under row-wise softmax.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets);

// Multi-head scaled dot-product attention. Heads are split along the feature
// axis, attended independently and concatenated; any output projection is the
// caller's. When weights_out is given it receives one [Lq,Lk] tensor per head.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 bool causal = false, std::vector<Tensor>* weights_out = nullptr);

}  // namespace afx::ops
