// include/pronscore/ops.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PRONSCORE_OPS_HPP_
#define PRONSCORE_OPS_HPP_

#include <vector>

#include "pronscore/rng.hpp"
#include "pronscore/tensor.hpp"

namespace pronscore::nn {

// Elementwise and structural ops. Masks and integer ids never receive
// gradients; everything else is differentiable.

// b's shape must equal a's shape or a trailing suffix of it (bias over
// [..., d], positional table over [B, L, d], ...).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& a, double c);

// a [..., M, K] x b [K, N], or batched a [L.., M, K] x b [L.., K, N].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);
Tensor transpose_12(const Tensor& a);  // rank-4 [A,B,C,D] -> [A,C,B,D]
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_dim1(const Tensor& a, const Tensor& b);        // rank-3
Tensor tile_dim0(const Tensor& a, int64_t n);                // -> [n, ...]
Tensor tile_dim1(const Tensor& a, int64_t n);                // [B, X..] -> [B, n, X..]
Tensor slice_dim1(const Tensor& a, int64_t start, int64_t len);  // rank-3
Tensor sum(const Tensor& a);  // scalar
Tensor gelu(const Tensor& a);

// x [..., in] x W [in, out] + b [out].
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// Normalizes over the last axis; gamma/beta have shape [d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Softmax over the last axis restricted to mask==1 entries; masked entries
// are exactly 0. A fully masked row is an error unless allow_empty_rows, in
// which case the row comes out all zero (used for padded pooling slots).
Tensor softmax_masked(const Tensor& x, const Tensor& mask,
                      bool allow_empty_rows = false);

// table [V, d], ids in [0, V) -> [ids.size(), d].
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);

// Reductions over the last axis. mask is 0/1 and the same shape as x.
Tensor masked_mean(const Tensor& x, const Tensor& mask,
                   bool allow_empty_rows = false);
Tensor masked_weighted_sum(const Tensor& x, const Tensor& w,
                           const Tensor& mask);

// Mean over mask==1 entries of (pred - target)^2; scalar.
Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // all [d, d] / [d]
};

// x [B, T, d]; key_mask [B, T] marks attendable positions.
Tensor multi_head_self_attention(const Tensor& x, const Tensor& key_mask,
                                 const AttentionParams& p, int n_heads);

}  // namespace pronscore::nn

#endif  // PRONSCORE_OPS_HPP_
