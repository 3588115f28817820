#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "affectrl/optim.hpp"
#include "affectrl/rng.hpp"
#include "affectrl/tensor.hpp"
#include "test_util.hpp"

using namespace affectrl;
using testutil::random_tensor;

TEST_CASE("softmax of equal logits is uniform") {
  const auto p = softmax({0.0, 0.0, 0.0});
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax is invariant under constant shifts") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits(5);
    for (double& v : logits) v = rng.uniform(-4.0, 4.0);
    const double c = rng.uniform(-30.0, 30.0);
    std::vector<double> shifted = logits;
    for (double& v : shifted) v += c;
    const auto a = softmax(logits);
    const auto b = softmax(shifted);
    double total = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(std::fabs(a[i] - b[i]) < 1e-12);
      total += a[i];
    }
    CHECK(std::fabs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax matches high-precision evaluation") {
  // evaluated with 30-digit arithmetic before implementation
  const auto p = softmax({1.0, 2.0, 3.0});
  CHECK(p[0] == doctest::Approx(0.090030573170380458).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.244728471054797652).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.665240955774821890).epsilon(1e-12));
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_WITH_AS(softmax({}), "empty logits", std::invalid_argument);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  SplitMix64 rng(3);
  Tensor x = random_tensor({3, 4}, rng);
  GradTape tape;
  tape.backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of x*x at 3 gives 6") {
  Tensor x = Tensor::scalar(3.0, true);
  GradTape tape;
  tape.backward(mul(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x(std::vector<int>{2, 2}, 1.0, true);
  GradTape tape;
  Tensor y = add(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("second backward without a new forward is an error") {
  Tensor x = Tensor::scalar(2.0, true);
  GradTape tape;
  Tensor y = mul(x, x);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), std::logic_error);
}

TEST_CASE("gradients accumulate additively at fan-out") {
  Tensor x = Tensor::scalar(1.5, true);
  GradTape tape;
  Tensor y = add(mul(x, x), mul(x, x));  // 2x^2, dy/dx = 4x
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("two-layer MLP gradient matches finite differences") {
  SplitMix64 rng(17);
  Tensor w1 = random_tensor({4, 8}, rng, -0.7, 0.7);
  Tensor b1 = random_tensor({8}, rng, -0.3, 0.3);
  Tensor w2 = random_tensor({8, 3}, rng, -0.7, 0.7);
  Tensor b2 = random_tensor({3}, rng, -0.3, 0.3);
  Tensor input = random_tensor({5, 4}, rng, -1.0, 1.0, false);

  auto f = [&] {
    Tensor h = tanh(add_bias(matmul(input, w1), b1));
    Tensor out = add_bias(matmul(h, w2), b2);
    return mean(mul(out, out));
  };
  CHECK(grad_check(f, {w1, b1, w2, b2}, 1e-5) < 1e-4);
}

TEST_CASE("grad_check on x squared") {
  Tensor x = Tensor::scalar(3.0, true);
  auto f = [&] { return mul(x, x); };
  CHECK(grad_check(f, {x}, 1e-5) < 1e-6);
}

TEST_CASE("grad_check on softmax cross-entropy") {
  SplitMix64 rng(23);
  Tensor logits = random_tensor({6, 9}, rng);
  std::vector<int> targets;
  for (int i = 0; i < 6; ++i) targets.push_back(static_cast<int>(rng.next_below(9)));
  auto f = [&] { return cross_entropy_rows(logits, targets); };
  CHECK(grad_check(f, {logits}, 1e-5) < 1e-5);
}

TEST_CASE("grad_check on a constant function") {
  Tensor x = Tensor::scalar(1.0, true);
  auto f = [&] { return scale(sub(x, x), 0.5); };
  CHECK(grad_check(f, {x}, 1e-5) < 1e-9);
}

TEST_CASE("grad_check rejects non-positive step") {
  Tensor x = Tensor::scalar(1.0, true);
  CHECK_THROWS_AS(grad_check([&] { return mul(x, x); }, {x}, 0.0), std::invalid_argument);
}

// Every differentiable primitive against central differences on random
// inputs in [-2, 2].
TEST_CASE("primitive gradients match finite differences") {
  SplitMix64 rng(41);
  const double tol = 1e-4;

  SUBCASE("add/sub/mul/scale") {
    Tensor a = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({3, 5}, rng);
    CHECK(grad_check([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b}, 1e-5) < tol);
    CHECK(grad_check([&] { return mean(scale(mul(a, b), -1.7)); }, {a, b}, 1e-5) < tol);
  }
  SUBCASE("add_bias") {
    Tensor m = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    CHECK(grad_check([&] { return sum(mul(add_bias(m, b), add_bias(m, b))); }, {m, b}, 1e-5) < tol);
  }
  SUBCASE("matmul and transpose") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    CHECK(grad_check([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(matmul(transpose(a), a)); }, {a}, 1e-5) < tol);
  }
  SUBCASE("embedding_rows") {
    Tensor table = random_tensor({6, 3}, rng);
    const std::vector<int> ids = {1, 4, 1, 0};
    CHECK(grad_check([&] { return sum(mul(embedding_rows(table, ids), embedding_rows(table, ids))); },
                     {table}, 1e-5) < tol);
  }
  SUBCASE("layer_norm_rows") {
    Tensor x = random_tensor({4, 6}, rng);
    Tensor g = random_tensor({6}, rng, 0.5, 1.5);
    Tensor b = random_tensor({6}, rng, -0.5, 0.5);
    CHECK(grad_check([&] { return sum(mul(layer_norm_rows(x, g, b), layer_norm_rows(x, g, b))); },
                     {x, g, b}, 1e-5) < tol);
  }
  SUBCASE("gelu / tanh / exp / clip / minimum") {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor y = random_tensor({3, 4}, rng);
    CHECK(grad_check([&] { return sum(gelu(x)); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(tanh(x)); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return mean(exp(x)); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(clip(x, -0.9, 1.1)); }, {x}, 1e-6) < tol);
    CHECK(grad_check([&] { return sum(minimum(x, y)); }, {x, y}, 1e-6) < tol);
  }
  SUBCASE("softmax_rows / causal / log_softmax") {
    Tensor x = random_tensor({4, 4}, rng);
    Tensor post = random_tensor({4, 4}, rng, -1.0, 1.0, false);
    CHECK(grad_check([&] { return sum(mul(softmax_rows(x), post)); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(mul(causal_softmax_rows(x), post)); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(mul(log_softmax_rows(x), post)); }, {x}, 1e-5) < tol);
  }
  SUBCASE("slices, concat, take_per_row") {
    Tensor x = random_tensor({4, 6}, rng);
    const std::vector<int> ids = {2, 0, 5, 1};
    CHECK(grad_check([&] { return sum(mul(slice_rows(x, 1, 2), slice_rows(x, 1, 2))); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(mul(slice_cols(x, 2, 3), slice_cols(x, 2, 3))); }, {x}, 1e-5) < tol);
    CHECK(grad_check([&] { return sum(take_per_row(x, ids)); }, {x}, 1e-5) < tol);
    CHECK(grad_check(
              [&] {
                auto parts = std::vector<Tensor>{slice_cols(x, 0, 2), slice_cols(x, 2, 4)};
                Tensor cat = concat_cols(parts);
                return sum(mul(cat, cat));
              },
              {x}, 1e-5) < tol);
  }
}

TEST_CASE("forward and backward are bit-reproducible") {
  auto run = [] {
    SplitMix64 rng(99);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    GradTape tape;
    Tensor loss = mean(mul(softmax_rows(matmul(a, b)), gelu(add(a, b))));
    const double value = loss.item();
    tape.backward(loss);
    return std::make_pair(value, a.grad());
  };
  const auto [v1, g1] = run();
  const auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("adam leaves params unchanged on zero gradients") {
  Tensor p(std::vector<int>{3}, 1.0, true);
  p.node()->ensure_grad();
  Adam opt({p}, {.lr = 0.1});
  const auto before = p.values();
  opt.step();
  CHECK(p.values() == before);
}

TEST_CASE("adam first step moves approximately -lr * sign(grad)") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  const std::vector<double> grads = {0.3, -0.7, 2.0};
  p.node()->ensure_grad();
  p.node()->grad = grads;
  const auto before = p.values();
  Adam opt({p}, {.lr = 0.01});
  opt.step();
  // bias-corrected first step: update = lr * g / (|g| + eps) = lr * sign(g)
  for (int i = 0; i < 3; ++i) {
    const double moved = p.at(i) - before[static_cast<size_t>(i)];
    const double sign = grads[static_cast<size_t>(i)] > 0.0 ? 1.0 : -1.0;
    CHECK(moved == doctest::Approx(-0.01 * sign).epsilon(1e-6));
  }
}

TEST_CASE("adam steps are reproducible for identical state") {
  auto run = [] {
    Tensor p = Tensor::from_data({2}, {0.4, -0.9}, true);
    Adam opt({p}, {.lr = 0.05});
    for (int i = 0; i < 3; ++i) {
      p.node()->ensure_grad();
      p.node()->grad = {0.2, -0.1};
      opt.step();
    }
    return p.values();
  };
  CHECK(run() == run());
}

TEST_CASE("raw adam_step rejects shape mismatch") {
  std::vector<double> params = {1.0, 2.0};
  std::vector<double> grads = {0.1};
  AdamState state;
  CHECK_THROWS_AS(adam_step(params, grads, state, 0.01), std::invalid_argument);
}

TEST_CASE("raw adam_step decays moments on zero gradient") {
  std::vector<double> params = {1.0};
  AdamState state;
  adam_step(params, {1.0}, state, 0.1);
  const double m_after_first = state.m[0];
  adam_step(params, {0.0}, state, 0.1);
  CHECK(state.m[0] == doctest::Approx(0.9 * m_after_first));
  CHECK(state.step == 2);
}

TEST_CASE("detach stops gradient flow") {
  Tensor x = Tensor::scalar(2.0, true);
  GradTape tape;
  Tensor y = mul(x, x);
  Tensor z = mul(y.detach(), x);  // d/dx = y only
  tape.backward(z);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}
