// src/ops.cpp
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

#include "pronscore/ops.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace pronscore::nn {

namespace {

// c[M,N] += a[M,K] * b[K,N]
void mm(const double* __restrict a, const double* __restrict b,
        double* __restrict c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i) {
    const double* arow = a + i * K;
    double* crow = c + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const double aik = arow[k];
      const double* brow = b + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[K,N] += a^T * b with a stored [M,K], b [M,N]
void mm_at_b(const double* __restrict a, const double* __restrict b,
             double* __restrict c, int64_t M, int64_t K, int64_t N) {
  for (int64_t m = 0; m < M; ++m) {
    const double* arow = a + m * K;
    const double* brow = b + m * N;
    for (int64_t k = 0; k < K; ++k) {
      const double amk = arow[k];
      double* crow = c + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += amk * brow[j];
    }
  }
}

// c[M,K] += a[M,N] * b^T with b stored [K,N]. Materializes b^T so the
// accumulation runs in the vectorizable ikj form instead of a scalar
// dot-product reduction.
void mm_a_bt(const double* __restrict a, const double* __restrict b,
             double* __restrict c, int64_t M, int64_t N, int64_t K) {
  std::vector<double> bt(static_cast<size_t>(N * K));
  for (int64_t k = 0; k < K; ++k)
    for (int64_t j = 0; j < N; ++j) bt[j * K + k] = b[k * N + j];
  for (int64_t m = 0; m < M; ++m) {
    const double* arow = a + m * N;
    double* crow = c + m * K;
    for (int64_t j = 0; j < N; ++j) {
      const double amj = arow[j];
      const double* btrow = bt.data() + j * K;
      for (int64_t k = 0; k < K; ++k) crow[k] += amj * btrow[k];
    }
  }
}

bool grad_wanted(const std::shared_ptr<Node>& n) { return n->tracked(); }

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
}

// b broadcast as a trailing suffix of a: returns the repeat count, or throws.
int64_t suffix_repeats(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) + " and " +
                     shape_str(sb) + " incompatible");
  size_t off = sa.size() - sb.size();
  for (size_t i = 0; i < sb.size(); ++i)
    if (sa[off + i] != sb[i])
      throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) +
                       " and " + shape_str(sb) + " incompatible");
  int64_t nb = shape_numel(sb);
  return nb == 0 ? 0 : shape_numel(sa) / nb;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  int64_t reps = suffix_repeats("add", a, b);
  const int64_t nb = b.numel();
  std::vector<double> out(a.values());
  for (int64_t r = 0; r < reps; ++r) {
    double* dst = out.data() + r * nb;
    const double* src = b.values().data();
    for (int64_t i = 0; i < nb; ++i) dst[i] += src[i];
  }
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn, reps, nb](Node& n) {
    if (grad_wanted(an))
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    if (grad_wanted(bn))
      for (int64_t r = 0; r < reps; ++r) {
        const double* g = n.grad.data() + r * nb;
        for (int64_t i = 0; i < nb; ++i) bn->grad[i] += g[i];
      }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& n) {
    if (grad_wanted(an))
      for (size_t i = 0; i < n.grad.size(); ++i)
        an->grad[i] += n.grad[i] * bn->value[i];
    if (grad_wanted(bn))
      for (size_t i = 0; i < n.grad.size(); ++i)
        bn->grad[i] += n.grad[i] * an->value[i];
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](Node& n) {
    if (grad_wanted(an))
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += c * n.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw ShapeError("matmul: ranks too small, " + shape_str(sa) + " x " +
                     shape_str(sb));
  const int64_t M = sa[sa.size() - 2], K = sa[sa.size() - 1];
  auto an = a.node(), bn = b.node();

  if (sb.size() == 2) {
    if (sb[0] != K)
      throw ShapeError("matmul: inner dims of " + shape_str(sa) + " and " +
                       shape_str(sb) + " differ");
    const int64_t N = sb[1];
    const int64_t rows = a.numel() / K;  // (leading * M)
    Shape out_shape(sa);
    out_shape.back() = N;
    std::vector<double> out(static_cast<size_t>(rows * N), 0.0);
    mm(a.values().data(), b.values().data(), out.data(), rows, K, N);
    return make_op(out_shape, std::move(out), {a, b},
                   [an, bn, rows, K, N](Node& n) {
                     if (grad_wanted(an))
                       mm_a_bt(n.grad.data(), bn->value.data(),
                               an->grad.data(), rows, N, K);
                     if (grad_wanted(bn))
                       mm_at_b(an->value.data(), n.grad.data(),
                               bn->grad.data(), rows, K, N);
                   });
  }

  if (sa.size() != sb.size())
    throw ShapeError("matmul: shapes " + shape_str(sa) + " and " +
                     shape_str(sb) + " incompatible");
  for (size_t i = 0; i + 2 < sa.size(); ++i)
    if (sa[i] != sb[i])
      throw ShapeError("matmul: leading dims of " + shape_str(sa) + " and " +
                       shape_str(sb) + " differ");
  if (sb[sb.size() - 2] != K)
    throw ShapeError("matmul: inner dims of " + shape_str(sa) + " and " +
                     shape_str(sb) + " differ");
  const int64_t N = sb.back();
  const int64_t batches = a.numel() / (M * K);
  Shape out_shape(sa);
  out_shape.back() = N;
  std::vector<double> out(static_cast<size_t>(batches * M * N), 0.0);
  for (int64_t i = 0; i < batches; ++i)
    mm(a.values().data() + i * M * K, b.values().data() + i * K * N,
       out.data() + i * M * N, M, K, N);
  return make_op(out_shape, std::move(out), {a, b},
                 [an, bn, batches, M, K, N](Node& n) {
                   for (int64_t i = 0; i < batches; ++i) {
                     const double* g = n.grad.data() + i * M * N;
                     if (grad_wanted(an))
                       mm_a_bt(g, bn->value.data() + i * K * N,
                               an->grad.data() + i * M * K, M, N, K);
                     if (grad_wanted(bn))
                       mm_at_b(an->value.data() + i * M * K, g,
                               bn->grad.data() + i * K * N, M, K, N);
                   }
                 });
}

Tensor transpose_last2(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() < 2)
    throw ShapeError("transpose_last2: rank < 2, " + shape_str(s));
  const int64_t M = s[s.size() - 2], N = s.back();
  const int64_t batches = a.numel() / (M * N);
  Shape out_shape(s);
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  std::vector<double> out(a.values().size());
  for (int64_t b = 0; b < batches; ++b) {
    const double* src = a.values().data() + b * M * N;
    double* dst = out.data() + b * M * N;
    for (int64_t i = 0; i < M; ++i)
      for (int64_t j = 0; j < N; ++j) dst[j * M + i] = src[i * N + j];
  }
  auto an = a.node();
  return make_op(out_shape, std::move(out), {a}, [an, batches, M, N](Node& n) {
    if (!grad_wanted(an)) return;
    for (int64_t b = 0; b < batches; ++b) {
      const double* g = n.grad.data() + b * M * N;  // [N, M]
      double* dst = an->grad.data() + b * M * N;    // [M, N]
      for (int64_t j = 0; j < N; ++j)
        for (int64_t i = 0; i < M; ++i) dst[i * N + j] += g[j * M + i];
    }
  });
}

Tensor transpose_12(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 4) throw ShapeError("transpose_12: rank-4 only, got " + shape_str(s));
  const int64_t A = s[0], B = s[1], C = s[2], D = s[3];
  Shape out_shape{A, C, B, D};
  std::vector<double> out(a.values().size());
  for (int64_t x = 0; x < A; ++x)
    for (int64_t y = 0; y < B; ++y)
      for (int64_t z = 0; z < C; ++z)
        std::memcpy(out.data() + ((x * C + z) * B + y) * D,
                    a.values().data() + ((x * B + y) * C + z) * D,
                    sizeof(double) * D);
  auto an = a.node();
  return make_op(out_shape, std::move(out), {a}, [an, A, B, C, D](Node& n) {
    if (!grad_wanted(an)) return;
    for (int64_t x = 0; x < A; ++x)
      for (int64_t z = 0; z < C; ++z)
        for (int64_t y = 0; y < B; ++y) {
          const double* g = n.grad.data() + ((x * C + z) * B + y) * D;
          double* dst = an->grad.data() + ((x * B + y) * C + z) * D;
          for (int64_t d = 0; d < D; ++d) dst[d] += g[d];
        }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  std::vector<double> out(a.values());
  auto an = a.node();
  return make_op(std::move(shape), std::move(out), {a}, [an](Node& n) {
    if (!grad_wanted(an)) return;
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
}

Tensor concat_dim1(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[2])
    throw ShapeError("concat_dim1: shapes " + shape_str(sa) + " and " +
                     shape_str(sb) + " incompatible");
  const int64_t B = sa[0], La = sa[1], Lb = sb[1], D = sa[2];
  Shape out_shape{B, La + Lb, D};
  std::vector<double> out(static_cast<size_t>(B * (La + Lb) * D));
  for (int64_t i = 0; i < B; ++i) {
    std::memcpy(out.data() + i * (La + Lb) * D, a.values().data() + i * La * D,
                sizeof(double) * La * D);
    std::memcpy(out.data() + (i * (La + Lb) + La) * D,
                b.values().data() + i * Lb * D, sizeof(double) * Lb * D);
  }
  auto an = a.node(), bn = b.node();
  return make_op(out_shape, std::move(out), {a, b},
                 [an, bn, B, La, Lb, D](Node& n) {
                   for (int64_t i = 0; i < B; ++i) {
                     const double* g = n.grad.data() + i * (La + Lb) * D;
                     if (grad_wanted(an)) {
                       double* dst = an->grad.data() + i * La * D;
                       for (int64_t j = 0; j < La * D; ++j) dst[j] += g[j];
                     }
                     if (grad_wanted(bn)) {
                       double* dst = bn->grad.data() + i * Lb * D;
                       const double* gb = g + La * D;
                       for (int64_t j = 0; j < Lb * D; ++j) dst[j] += gb[j];
                     }
                   }
                 });
}

Tensor tile_dim0(const Tensor& a, int64_t reps) {
  if (reps <= 0) throw ShapeError("tile_dim0: nonpositive repeat count");
  Shape out_shape;
  out_shape.push_back(reps);
  for (int64_t d : a.shape()) out_shape.push_back(d);
  const int64_t na = a.numel();
  std::vector<double> out(static_cast<size_t>(reps * na));
  for (int64_t r = 0; r < reps; ++r)
    std::memcpy(out.data() + r * na, a.values().data(), sizeof(double) * na);
  auto an = a.node();
  return make_op(out_shape, std::move(out), {a}, [an, reps, na](Node& n) {
    if (!grad_wanted(an)) return;
    for (int64_t r = 0; r < reps; ++r) {
      const double* g = n.grad.data() + r * na;
      for (int64_t i = 0; i < na; ++i) an->grad[i] += g[i];
    }
  });
}

Tensor tile_dim1(const Tensor& a, int64_t reps) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("tile_dim1: scalar input");
  if (reps <= 0) throw ShapeError("tile_dim1: nonpositive repeat count");
  const int64_t B = s[0];
  const int64_t inner = a.numel() / B;
  Shape out_shape;
  out_shape.push_back(B);
  out_shape.push_back(reps);
  for (size_t i = 1; i < s.size(); ++i) out_shape.push_back(s[i]);
  std::vector<double> out(static_cast<size_t>(B * reps * inner));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t r = 0; r < reps; ++r)
      std::memcpy(out.data() + (b * reps + r) * inner,
                  a.values().data() + b * inner, sizeof(double) * inner);
  auto an = a.node();
  return make_op(out_shape, std::move(out), {a}, [an, B, reps, inner](Node& n) {
    if (!grad_wanted(an)) return;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t r = 0; r < reps; ++r) {
        const double* g = n.grad.data() + (b * reps + r) * inner;
        double* dst = an->grad.data() + b * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += g[i];
      }
  });
}

Tensor slice_dim1(const Tensor& a, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw ShapeError("slice_dim1: rank-3 only, got " + shape_str(s));
  if (start < 0 || len < 0 || start + len > s[1])
    throw ShapeError("slice_dim1: slice [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of " + shape_str(s));
  const int64_t B = s[0], L = s[1], D = s[2];
  Shape out_shape{B, len, D};
  std::vector<double> out(static_cast<size_t>(B * len * D));
  for (int64_t b = 0; b < B; ++b)
    std::memcpy(out.data() + b * len * D,
                a.values().data() + (b * L + start) * D,
                sizeof(double) * len * D);
  auto an = a.node();
  return make_op(out_shape, std::move(out), {a},
                 [an, B, L, D, start, len](Node& n) {
                   if (!grad_wanted(an)) return;
                   for (int64_t b = 0; b < B; ++b) {
                     const double* g = n.grad.data() + b * len * D;
                     double* dst = an->grad.data() + (b * L + start) * D;
                     for (int64_t j = 0; j < len * D; ++j) dst[j] += g[j];
                   }
                 });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return make_op({}, {s}, {a}, [an](Node& n) {
    if (!grad_wanted(an)) return;
    const double g = n.grad[0];
    for (double& v : an->grad) v += g;
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](Node& n) {
    if (!grad_wanted(an)) return;
    for (size_t i = 0; i < n.grad.size(); ++i) {
      const double x = an->value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      an->grad[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  const Shape& sw = W.shape();
  if (sw.size() != 2)
    throw ShapeError("linear: weight must be rank-2, got " + shape_str(sw));
  if (x.shape().empty() || x.shape().back() != sw[0])
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(sw));
  if (b.shape() != Shape{sw[1]})
    throw ShapeError("linear: bias " + shape_str(b.shape()) +
                     " incompatible with weight " + shape_str(sw));
  return add(matmul(x, W), b);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("layer_norm: scalar input");
  const int64_t d = s.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw ShapeError("layer_norm: params " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " incompatible with input " +
                     shape_str(s));
  const int64_t rows = x.numel() / d;
  std::vector<double> out(x.values().size());
  std::vector<double> xhat(x.values().size());
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * d;
    double mean = 0.0;
    for (int64_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = istd;
    for (int64_t i = 0; i < d; ++i) {
      const double xh = (xr[i] - mean) * istd;
      xhat[r * d + i] = xh;
      out[r * d + i] = gamma.values()[i] * xh + beta.values()[i];
    }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op(
      s, std::move(out), {x, gamma, beta},
      [xn, gn, bn, rows, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node& n) {
        std::vector<double> dxhat(static_cast<size_t>(d));
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (grad_wanted(gn))
            for (int64_t i = 0; i < d; ++i) gn->grad[i] += g[i] * xh[i];
          if (grad_wanted(bn))
            for (int64_t i = 0; i < d; ++i) bn->grad[i] += g[i];
          if (grad_wanted(xn)) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int64_t i = 0; i < d; ++i) {
              dxhat[i] = g[i] * gn->value[i];
              mean_dxhat += dxhat[i];
              mean_dxhat_xhat += dxhat[i] * xh[i];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            const double istd = inv_std[static_cast<size_t>(r)];
            double* dx = xn->grad.data() + r * d;
            for (int64_t i = 0; i < d; ++i)
              dx[i] += istd * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
          }
        }
      });
}

Tensor softmax_masked(const Tensor& x, const Tensor& mask,
                      bool allow_empty_rows) {
  check_same_shape("softmax_masked", x, mask);
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("softmax_masked: scalar input");
  const int64_t T = s.back();
  const int64_t rows = x.numel() / T;
  std::vector<double> out(x.values().size(), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * T;
    const double* mr = mask.values().data() + r * T;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < T; ++i)
      if (mr[i] != 0.0 && xr[i] > mx) mx = xr[i];
    if (mx == -std::numeric_limits<double>::infinity()) {
      if (allow_empty_rows) continue;  // row stays all-zero
      throw DomainError("softmax_masked: all entries masked in row " +
                        std::to_string(r));
    }
    double z = 0.0;
    double* orow = out.data() + r * T;
    for (int64_t i = 0; i < T; ++i)
      if (mr[i] != 0.0) z += (orow[i] = std::exp(xr[i] - mx));
    for (int64_t i = 0; i < T; ++i) orow[i] /= z;
  }
  auto xn = x.node();
  return make_op(s, std::move(out), {x}, [xn, rows, T](Node& n) {
    if (!grad_wanted(xn)) return;
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = n.value.data() + r * T;
      const double* g = n.grad.data() + r * T;
      double dot = 0.0;
      for (int64_t i = 0; i < T; ++i) dot += g[i] * y[i];
      double* dx = xn->grad.data() + r * T;
      for (int64_t i = 0; i < T; ++i) dx[i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
  const Shape& s = table.shape();
  if (s.size() != 2)
    throw ShapeError("embedding_lookup: table must be rank-2, got " +
                     shape_str(s));
  const int64_t V = s[0], d = s[1];
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || ids[i] >= V)
      throw RangeError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " at position " + std::to_string(i) +
                       " outside table of size " + std::to_string(V));
  std::vector<double> out(ids.size() * static_cast<size_t>(d));
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + i * d, table.values().data() + ids[i] * d,
                sizeof(double) * d);
  auto tn = table.node();
  return make_op({static_cast<int64_t>(ids.size()), d}, std::move(out), {table},
                 [tn, ids, d](Node& n) {
                   if (!grad_wanted(tn)) return;
                   for (size_t i = 0; i < ids.size(); ++i) {
                     const double* g = n.grad.data() + i * d;
                     double* dst = tn->grad.data() + ids[i] * d;
                     for (int64_t j = 0; j < d; ++j) dst[j] += g[j];
                   }
                 });
}

Tensor masked_mean(const Tensor& x, const Tensor& mask, bool allow_empty_rows) {
  check_same_shape("masked_mean", x, mask);
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("masked_mean: scalar input");
  const int64_t T = s.back();
  const int64_t rows = x.numel() / T;
  Shape out_shape(s.begin(), s.end() - 1);
  std::vector<double> out(static_cast<size_t>(rows), 0.0);
  std::vector<double> inv_count(static_cast<size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * T;
    const double* mr = mask.values().data() + r * T;
    double c = 0.0, acc = 0.0;
    for (int64_t i = 0; i < T; ++i) {
      c += mr[i];
      acc += mr[i] * xr[i];
    }
    if (c == 0.0) {
      if (allow_empty_rows) continue;
      throw DomainError("masked_mean: empty reduction in row " +
                        std::to_string(r));
    }
    inv_count[static_cast<size_t>(r)] = 1.0 / c;
    out[static_cast<size_t>(r)] = acc / c;
  }
  auto xn = x.node(), mn = mask.node();
  return make_op(out_shape, std::move(out), {x},
                 [xn, mn, rows, T, inv_count = std::move(inv_count)](Node& n) {
                   if (!grad_wanted(xn)) return;
                   for (int64_t r = 0; r < rows; ++r) {
                     const double gr = n.grad[static_cast<size_t>(r)] *
                                       inv_count[static_cast<size_t>(r)];
                     const double* mr = mn->value.data() + r * T;
                     double* dx = xn->grad.data() + r * T;
                     for (int64_t i = 0; i < T; ++i) dx[i] += gr * mr[i];
                   }
                 });
}

Tensor masked_weighted_sum(const Tensor& x, const Tensor& w,
                           const Tensor& mask) {
  check_same_shape("masked_weighted_sum", x, w);
  check_same_shape("masked_weighted_sum", x, mask);
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("masked_weighted_sum: scalar input");
  const int64_t T = s.back();
  const int64_t rows = x.numel() / T;
  Shape out_shape(s.begin(), s.end() - 1);
  std::vector<double> out(static_cast<size_t>(rows), 0.0);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * T;
    const double* wr = w.values().data() + r * T;
    const double* mr = mask.values().data() + r * T;
    double acc = 0.0;
    for (int64_t i = 0; i < T; ++i) acc += mr[i] * wr[i] * xr[i];
    out[static_cast<size_t>(r)] = acc;
  }
  auto xn = x.node(), wn = w.node(), mn = mask.node();
  return make_op(out_shape, std::move(out), {x, w}, [xn, wn, mn, rows, T](Node& n) {
    for (int64_t r = 0; r < rows; ++r) {
      const double gr = n.grad[static_cast<size_t>(r)];
      const double* mr = mn->value.data() + r * T;
      if (grad_wanted(xn)) {
        const double* wr = wn->value.data() + r * T;
        double* dx = xn->grad.data() + r * T;
        for (int64_t i = 0; i < T; ++i) dx[i] += gr * mr[i] * wr[i];
      }
      if (grad_wanted(wn)) {
        const double* xr = xn->value.data() + r * T;
        double* dw = wn->grad.data() + r * T;
        for (int64_t i = 0; i < T; ++i) dw[i] += gr * mr[i] * xr[i];
      }
    }
  });
}

Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  check_same_shape("mse_masked", pred, target);
  check_same_shape("mse_masked", pred, mask);
  double count = 0.0, acc = 0.0;
  for (size_t i = 0; i < pred.values().size(); ++i) {
    const double m = mask.values()[i];
    const double diff = pred.values()[i] - target.values()[i];
    count += m;
    acc += m * diff * diff;
  }
  if (count == 0.0) throw DomainError("mse_masked: all positions masked");
  auto pn = pred.node(), tn = target.node(), mn = mask.node();
  return make_op({}, {acc / count}, {pred, target},
                 [pn, tn, mn, count](Node& n) {
                   const double g = 2.0 * n.grad[0] / count;
                   for (size_t i = 0; i < pn->value.size(); ++i) {
                     const double d = mn->value[i] * (pn->value[i] - tn->value[i]);
                     if (grad_wanted(pn)) pn->grad[i] += g * d;
                     if (grad_wanted(tn)) tn->grad[i] -= g * d;
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw RangeError("dropout: rate " + std::to_string(rate) +
                     " outside [0, 1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.values().size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto xn = x.node();
  return make_op(x.shape(), std::move(out), {x},
                 [xn, mask = std::move(mask)](Node& n) {
                   if (!grad_wanted(xn)) return;
                   for (size_t i = 0; i < n.grad.size(); ++i)
                     xn->grad[i] += n.grad[i] * mask[i];
                 });
}

Tensor multi_head_self_attention(const Tensor& x, const Tensor& key_mask,
                                 const AttentionParams& p, int n_heads) {
  const Shape& s = x.shape();
  if (s.size() != 3)
    throw ShapeError("multi_head_self_attention: input must be [B,T,d], got " +
                     shape_str(s));
  const int64_t B = s[0], T = s[1], d = s[2];
  if (key_mask.shape() != Shape{B, T})
    throw ShapeError("multi_head_self_attention: mask " +
                     shape_str(key_mask.shape()) + " incompatible with input " +
                     shape_str(s));
  if (n_heads <= 0 || d % n_heads != 0)
    throw ShapeError("multi_head_self_attention: d=" + std::to_string(d) +
                     " not divisible by heads=" + std::to_string(n_heads));
  const int64_t H = n_heads, dh = d / H;

  auto split_heads = [&](const Tensor& t) {
    return transpose_12(reshape(t, {B, T, H, dh}));  // [B,H,T,dh]
  };
  Tensor q = split_heads(linear(x, p.wq, p.bq));
  Tensor k = split_heads(linear(x, p.wk, p.bk));
  Tensor v = split_heads(linear(x, p.wv, p.bv));

  Tensor scores = matmul(scale(q, 1.0 / std::sqrt(static_cast<double>(dh))),
                         transpose_last2(k));  // [B,H,T,T]

  // Key mask broadcast to every (head, query) row.
  std::vector<double> mexp(static_cast<size_t>(B * H * T * T));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t t = 0; t < T; ++t)
        std::memcpy(mexp.data() + ((b * H + h) * T + t) * T,
                    key_mask.values().data() + b * T, sizeof(double) * T);
  Tensor attn = softmax_masked(
      scores, Tensor::from({B, H, T, T}, std::move(mexp)));

  Tensor ctx = reshape(transpose_12(matmul(attn, v)), {B, T, d});
  return linear(ctx, p.wo, p.bo);
}

}  // namespace pronscore::nn
