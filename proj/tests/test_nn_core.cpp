// tests/test_nn_core.cpp
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pronscore/adam.hpp"
#include "pronscore/ops.hpp"
#include "pronscore/tensor.hpp"

using namespace pronscore;
using nn::Tensor;
using oracles::max_grad_rel_err;
using oracles::random_tensor;
using oracles::weighted_scalar;

namespace {
constexpr double kGradTol = 1e-6;
constexpr int kInstancesPerOp = 25;
}  // namespace

TEST_CASE("softmax of equal values is uniform") {
  Tensor x = Tensor::from({3}, {1.5, 1.5, 1.5});
  Tensor m = Tensor::full({3}, 1.0);
  Tensor y = nn::softmax_masked(x, m);
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one over unmasked entries, masked are zero") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    const int64_t rows = rng.uniform_int(1, 4), T = rng.uniform_int(2, 7);
    Tensor x = random_tensor(rng, {rows, T}, false, -5, 5);
    std::vector<double> mask(static_cast<size_t>(rows * T), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
      mask[r * T + rng.uniform_int(0, T - 1)] = 1.0;  // at least one kept
      for (int64_t i = 0; i < T; ++i)
        if (rng.uniform() < 0.5) mask[r * T + i] = 1.0;
    }
    Tensor m = Tensor::from({rows, T}, mask);
    Tensor y = nn::softmax_masked(x, m);
    for (int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int64_t i = 0; i < T; ++i) {
        const double v = y.values()[r * T + i];
        if (mask[r * T + i] == 0.0) CHECK(v == 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax errors on fully masked row") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor m = Tensor::from({2, 2}, {1, 0, 0, 0});
  CHECK_THROWS_AS(nn::softmax_masked(x, m), DomainError);
}

TEST_CASE("mse_masked identity and mask semantics") {
  Tensor pred = Tensor::from({3}, {1, 2, 3});
  Tensor target = Tensor::from({3}, {1, 2, 3});
  Tensor ones = Tensor::full({3}, 1.0);
  CHECK(nn::mse_masked(pred, target, ones).item() == 0.0);

  // Values at masked positions must not matter.
  Tensor t2 = Tensor::from({3}, {1, 2, -500});
  Tensor m2 = Tensor::from({3}, {1, 1, 0});
  CHECK(nn::mse_masked(pred, t2, m2).item() == 0.0);
  Tensor all_masked = Tensor::zeros({3});
  CHECK_THROWS_AS(nn::mse_masked(pred, target, all_masked), DomainError);
}

TEST_CASE("masked_mean ignores masked values") {
  Tensor x = Tensor::from({3}, {2, 4, 99});
  Tensor m = Tensor::from({3}, {1, 1, 0});
  CHECK(nn::masked_mean(x, m).item() == doctest::Approx(3.0).epsilon(1e-15));
  Tensor zero_mask = Tensor::zeros({3});
  CHECK_THROWS_AS(nn::masked_mean(x, zero_mask), DomainError);
}

TEST_CASE("shape errors carry both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  try {
    nn::mul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Rng rng(3);
  Tensor w = random_tensor(rng, {3, 4});
  Tensor l = nn::sum(w);
  nn::backward(l);
  for (double g : w.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward rejects misuse") {
  Rng rng(5);
  Tensor w = random_tensor(rng, {2, 2});
  SUBCASE("non-scalar loss") {
    Tensor y = nn::scale(w, 2.0);
    CHECK_THROWS_AS(nn::backward(y), TrainingError);
  }
  SUBCASE("detached graph") {
    Tensor c = random_tensor(rng, {2, 2}, false);
    Tensor l = nn::sum(nn::scale(c, 1.5));
    CHECK_THROWS_AS(nn::backward(l), TrainingError);
  }
  SUBCASE("repeated backward through the same loss") {
    Tensor l = nn::sum(w);
    nn::backward(l);
    CHECK_THROWS_AS(nn::backward(l), TrainingError);
  }
  SUBCASE("second backward without grad reset") {
    Tensor l1 = nn::sum(w);
    nn::backward(l1);
    Tensor l2 = nn::sum(w);
    CHECK_THROWS_AS(nn::backward(l2), TrainingError);
    w.zero_grad();
    Tensor l3 = nn::sum(w);
    nn::backward(l3);  // fine after reset
  }
}

TEST_CASE("linear + mse gradient matches finite differences on a 2x2 instance") {
  Rng rng(7);
  Tensor x = random_tensor(rng, {2, 2}, false);
  Tensor w = random_tensor(rng, {2, 2});
  Tensor b = random_tensor(rng, {2});
  Tensor y = random_tensor(rng, {2, 2}, false);
  Tensor mask = Tensor::full({2, 2}, 1.0);
  auto build = [&]() { return nn::mse_masked(nn::linear(x, w, b), y, mask); };
  CHECK(max_grad_rel_err(build, {w, b}) < kGradTol);
}

TEST_CASE("per-op gradients match finite differences on random instances") {
  Rng rng(2024);

  SUBCASE("add with broadcast") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t B = rng.uniform_int(1, 3), L = rng.uniform_int(1, 4),
                    d = rng.uniform_int(1, 5);
      Tensor a = random_tensor(rng, {B, L, d});
      Tensor b = random_tensor(rng, {d});
      Tensor wgt = random_tensor(rng, {B, L, d}, false);
      auto build = [&]() { return weighted_scalar(nn::add(a, b), wgt); };
      CHECK(max_grad_rel_err(build, {a, b}) < kGradTol);
    }
  }
  SUBCASE("mul and scale") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t n = rng.uniform_int(2, 8);
      Tensor a = random_tensor(rng, {n});
      Tensor b = random_tensor(rng, {n});
      Tensor wgt = random_tensor(rng, {n}, false);
      auto build = [&]() {
        return weighted_scalar(nn::scale(nn::mul(a, b), 1.7), wgt);
      };
      CHECK(max_grad_rel_err(build, {a, b}) < kGradTol);
    }
  }
  SUBCASE("matmul against 2-D weight") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t B = rng.uniform_int(1, 3), M = rng.uniform_int(1, 4),
                    K = rng.uniform_int(1, 4), N = rng.uniform_int(1, 4);
      Tensor a = random_tensor(rng, {B, M, K});
      Tensor b = random_tensor(rng, {K, N});
      Tensor wgt = random_tensor(rng, {B, M, N}, false);
      auto build = [&]() { return weighted_scalar(nn::matmul(a, b), wgt); };
      CHECK(max_grad_rel_err(build, {a, b}) < kGradTol);
    }
  }
  SUBCASE("batched matmul with transpose") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t B = rng.uniform_int(1, 2), H = rng.uniform_int(1, 2),
                    T = rng.uniform_int(1, 3), dh = rng.uniform_int(1, 3);
      Tensor q = random_tensor(rng, {B, H, T, dh});
      Tensor k = random_tensor(rng, {B, H, T, dh});
      Tensor wgt = random_tensor(rng, {B, H, T, T}, false);
      auto build = [&]() {
        return weighted_scalar(nn::matmul(q, nn::transpose_last2(k)), wgt);
      };
      CHECK(max_grad_rel_err(build, {q, k}) < kGradTol);
    }
  }
  SUBCASE("reshape, transpose_12, tile, slice, concat") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t B = rng.uniform_int(1, 2), L = rng.uniform_int(2, 4),
                    d = rng.uniform_int(1, 3);
      Tensor a = random_tensor(rng, {B, L, d});
      Tensor c = random_tensor(rng, {B, 1, d});
      Tensor wgt1 = random_tensor(rng, {B, 2, L, d}, false);
      auto build1 = [&]() {
        Tensor tiled = nn::tile_dim1(a, 2);  // [B,2,L,d]
        return weighted_scalar(tiled, wgt1);
      };
      CHECK(max_grad_rel_err(build1, {a}) < kGradTol);

      Tensor wgt2 = random_tensor(rng, {B, L + 1, d}, false);
      auto build2 = [&]() {
        return weighted_scalar(nn::concat_dim1(c, a), wgt2);
      };
      CHECK(max_grad_rel_err(build2, {c, a}) < kGradTol);

      Tensor wgt3 = random_tensor(rng, {B, L - 1, d}, false);
      auto build3 = [&]() {
        return weighted_scalar(nn::slice_dim1(a, 1, L - 1), wgt3);
      };
      CHECK(max_grad_rel_err(build3, {a}) < kGradTol);

      Tensor f = random_tensor(rng, {B, L, 2, d});
      Tensor wgt4 = random_tensor(rng, {B, 2, L, d}, false);
      auto build4 = [&]() {
        return weighted_scalar(nn::transpose_12(f), wgt4);
      };
      CHECK(max_grad_rel_err(build4, {f}) < kGradTol);
    }
  }
  SUBCASE("gelu") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t n = rng.uniform_int(2, 10);
      Tensor a = random_tensor(rng, {n}, true, -3, 3);
      Tensor wgt = random_tensor(rng, {n}, false);
      auto build = [&]() { return weighted_scalar(nn::gelu(a), wgt); };
      CHECK(max_grad_rel_err(build, {a}) < kGradTol);
    }
  }
  SUBCASE("layer_norm") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t rows = rng.uniform_int(1, 4), d = rng.uniform_int(2, 6);
      Tensor x = random_tensor(rng, {rows, d});
      Tensor g = random_tensor(rng, {d}, true, 0.5, 1.5);
      Tensor b = random_tensor(rng, {d}, true, -0.5, 0.5);
      Tensor wgt = random_tensor(rng, {rows, d}, false);
      auto build = [&]() {
        return weighted_scalar(nn::layer_norm(x, g, b), wgt);
      };
      CHECK(max_grad_rel_err(build, {x, g, b}) < kGradTol);
    }
  }
  SUBCASE("softmax_masked") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t rows = rng.uniform_int(1, 3), T = rng.uniform_int(2, 6);
      Tensor x = random_tensor(rng, {rows, T});
      std::vector<double> mask(static_cast<size_t>(rows * T), 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        mask[r * T + rng.uniform_int(0, T - 1)] = 1.0;
        for (int64_t i = 0; i < T; ++i)
          if (rng.uniform() < 0.6) mask[r * T + i] = 1.0;
      }
      Tensor m = Tensor::from({rows, T}, mask);
      Tensor wgt = random_tensor(rng, {rows, T}, false);
      auto build = [&]() {
        return weighted_scalar(nn::softmax_masked(x, m), wgt);
      };
      CHECK(max_grad_rel_err(build, {x}) < kGradTol);
    }
  }
  SUBCASE("embedding_lookup") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t V = rng.uniform_int(2, 6), d = rng.uniform_int(1, 4);
      Tensor table = random_tensor(rng, {V, d});
      std::vector<int64_t> ids;
      const int64_t n = rng.uniform_int(1, 6);
      for (int64_t i = 0; i < n; ++i) ids.push_back(rng.uniform_int(0, V - 1));
      Tensor wgt = random_tensor(rng, {n, d}, false);
      auto build = [&]() {
        return weighted_scalar(nn::embedding_lookup(table, ids), wgt);
      };
      CHECK(max_grad_rel_err(build, {table}) < kGradTol);
    }
  }
  SUBCASE("masked_mean and masked_weighted_sum") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t rows = rng.uniform_int(1, 3), T = rng.uniform_int(2, 6);
      Tensor x = random_tensor(rng, {rows, T});
      Tensor w = random_tensor(rng, {rows, T});
      std::vector<double> mask(static_cast<size_t>(rows * T), 0.0);
      for (int64_t r = 0; r < rows; ++r) {
        mask[r * T + rng.uniform_int(0, T - 1)] = 1.0;
        for (int64_t i = 0; i < T; ++i)
          if (rng.uniform() < 0.5) mask[r * T + i] = 1.0;
      }
      Tensor m = Tensor::from({rows, T}, mask);
      Tensor wgt = random_tensor(rng, {rows}, false);
      auto build1 = [&]() {
        return weighted_scalar(nn::masked_mean(x, m), wgt);
      };
      CHECK(max_grad_rel_err(build1, {x}) < kGradTol);
      auto build2 = [&]() {
        return weighted_scalar(nn::masked_weighted_sum(x, w, m), wgt);
      };
      CHECK(max_grad_rel_err(build2, {x, w}) < kGradTol);
    }
  }
  SUBCASE("mse_masked") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t n = rng.uniform_int(2, 8);
      Tensor pred = random_tensor(rng, {n});
      Tensor target = random_tensor(rng, {n});
      std::vector<double> mask(static_cast<size_t>(n), 0.0);
      mask[static_cast<size_t>(rng.uniform_int(0, n - 1))] = 1.0;
      for (int64_t i = 0; i < n; ++i)
        if (rng.uniform() < 0.5) mask[static_cast<size_t>(i)] = 1.0;
      Tensor m = Tensor::from({n}, mask);
      auto build = [&]() { return nn::mse_masked(pred, target, m); };
      CHECK(max_grad_rel_err(build, {pred, target}) < kGradTol);
    }
  }
  SUBCASE("multi_head_self_attention") {
    for (int it = 0; it < kInstancesPerOp; ++it) {
      const int64_t B = rng.uniform_int(1, 2), T = rng.uniform_int(2, 4);
      const int heads = static_cast<int>(rng.uniform_int(1, 2));
      const int64_t d = 2 * heads;
      nn::AttentionParams p{random_tensor(rng, {d, d}), random_tensor(rng, {d}),
                            random_tensor(rng, {d, d}), random_tensor(rng, {d}),
                            random_tensor(rng, {d, d}), random_tensor(rng, {d}),
                            random_tensor(rng, {d, d}), random_tensor(rng, {d})};
      Tensor x = random_tensor(rng, {B, T, d});
      std::vector<double> mask(static_cast<size_t>(B * T), 0.0);
      for (int64_t b = 0; b < B; ++b) {
        mask[b * T] = 1.0;
        for (int64_t i = 1; i < T; ++i)
          if (rng.uniform() < 0.7) mask[b * T + i] = 1.0;
      }
      Tensor m = Tensor::from({B, T}, mask);
      Tensor wgt = random_tensor(rng, {B, T, d}, false);
      auto build = [&]() {
        return weighted_scalar(nn::multi_head_self_attention(x, m, p, heads),
                               wgt);
      };
      CHECK(max_grad_rel_err(build, {x, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv,
                                     p.wo, p.bo}) < kGradTol);
    }
  }
  SUBCASE("dropout keeps mask fixed in the graph") {
    for (int it = 0; it < 10; ++it) {
      const int64_t n = rng.uniform_int(4, 10);
      Tensor a = random_tensor(rng, {n});
      Tensor wgt = random_tensor(rng, {n}, false);
      Rng drng(static_cast<uint64_t>(it));
      Tensor out = nn::dropout(a, 0.4, drng);
      Tensor l = weighted_scalar(out, wgt);
      nn::backward(l);
      for (int64_t i = 0; i < n; ++i) {
        const double scale_i = out.values()[i] == 0.0 && a.values()[i] != 0.0
                                   ? 0.0
                                   : 1.0 / 0.6;
        CHECK(a.grad()[i] ==
              doctest::Approx(wgt.values()[i] * scale_i).epsilon(1e-12));
      }
      a.zero_grad();
    }
  }
}

TEST_CASE("adam fixed point on zero gradient") {
  Tensor w = Tensor::from({3}, {0.5, -0.25, 1.0}, true);
  const std::vector<double> before = w.values();
  std::vector<Tensor> params{w};
  nn::AdamState state = nn::AdamState::init(params, 1e-3);
  w.zero_grad();
  nn::adam_step(params, state);
  CHECK(state.step == 1);
  CHECK(w.values() == before);  // bit-identical
}

TEST_CASE("adam first step against the hand-evaluated recurrence") {
  // g = 1: m1 = 0.1, v1 = 0.001, mhat = 1, vhat = 1,
  // delta = lr / (1 + eps).
  Tensor w = Tensor::from({1}, {2.0}, true);
  std::vector<Tensor> params{w};
  nn::AdamState state = nn::AdamState::init(params, 1e-3);
  w.zero_grad();
  w.node()->grad[0] = 1.0;
  nn::adam_step(params, state);
  const double expected = 2.0 - 1e-3 / (1.0 + 1e-8);
  CHECK(w.values()[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adam determinism across identical parameter sets") {
  Rng rng(99);
  Tensor a = random_tensor(rng, {4, 3});
  Tensor b = Tensor::from(a.shape(), a.values(), true);
  std::vector<Tensor> pa{a}, pb{b};
  nn::AdamState sa = nn::AdamState::init(pa, 1e-3);
  nn::AdamState sb = nn::AdamState::init(pb, 1e-3);
  for (int step = 0; step < 5; ++step) {
    Rng grng(static_cast<uint64_t>(step));
    a.zero_grad();
    b.zero_grad();
    for (size_t i = 0; i < a.values().size(); ++i) {
      const double g = grng.normal();
      a.node()->grad[i] = g;
      b.node()->grad[i] = g;
    }
    nn::adam_step(pa, sa);
    nn::adam_step(pb, sb);
  }
  CHECK(a.values() == b.values());
}

TEST_CASE("graph reuse accumulates gradients within one backward") {
  // y = w used twice: dy/dw = 2.
  Tensor w = Tensor::from({2}, {1.0, -1.0}, true);
  Tensor l = nn::sum(nn::add(w, w));
  nn::backward(l);
  for (double g : w.grad()) CHECK(g == 2.0);
}
