#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <random>

#include "autodiff.hpp"
#include "doctest.h"
#include "tensor.hpp"

using namespace advgrad;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

double rel_err(double got, double want) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
  return std::abs(got - want) / denom;
}

// backward() against finite_diff_grad on a scalar function of one leaf
void check_grad(const std::function<ValueId(Tape&, ValueId)>& build,
                const Tensor& x, double tol = 1e-4) {
  Tape tape;
  const ValueId xid = tape.leaf(x);
  const ValueId out = build(tape, xid);
  REQUIRE(tape.value(out).is_scalar());
  const Gradient g = tape.backward(out);
  const Tensor fd = finite_diff_grad(
      [&](const Tensor& v) {
        Tape t2;
        return t2.value(build(t2, t2.leaf(v)))[0];
      },
      x, 1e-5);
  REQUIRE(g.wrt(xid).size() == fd.size());
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(rel_err(g.wrt(xid)[i], fd[i]) < tol);
}

}  // namespace

TEST_CASE("matmul identity") {
  Tape tape;
  const ValueId i2 = tape.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  const ValueId m = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const Tensor& out = tape.value(tape.matmul(i2, m));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out[i] == tape.value(m)[i]);
}

TEST_CASE("matmul 1x2 times 2x1") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor({1, 2}, {1, 2}));
  const ValueId b = tape.leaf(Tensor({2, 1}, {3, 4}));
  const Tensor& out = tape.value(tape.matmul(a, b));
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(11.0));
}

TEST_CASE("matmul against triple-loop reference on random shapes") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 5, k = 1 + rng() % 5, n = 1 + rng() % 5;
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    Tape tape;
    const Tensor& got = tape.value(tape.matmul(tape.leaf(a), tape.leaf(b)));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double want = 0.0;
        for (std::size_t p = 0; p < k; ++p)
          want += a.at2(i, p, k) * b.at2(p, j, n);
        CHECK(got.at2(i, j, n) == doctest::Approx(want).epsilon(1e-12));
      }
  }
}

TEST_CASE("matmul dimension mismatch names both shapes") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor({2, 3}));
  const ValueId b = tape.leaf(Tensor({2, 3}));
  CHECK_THROWS_AS(tape.matmul(a, b), std::invalid_argument);
  try {
    tape.matmul(a, b);
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("conv2d with 1x1 unit kernel is the identity") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tape tape;
  const ValueId out = tape.conv2d(tape.leaf(x),
                                  tape.leaf(Tensor({1, 1, 1, 1}, {1.0})), 1, 0);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(tape.value(out)[i] == x[i]);
}

TEST_CASE("conv2d all-ones 2x2 kernel sums the window") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  const ValueId w = tape.leaf(Tensor({1, 1, 2, 2}, {1, 1, 1, 1}));
  const Tensor& out = tape.value(tape.conv2d(x, w, 1, 0));
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(10.0));
}

TEST_CASE("conv2d kernel larger than padded input errors") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({1, 1, 3, 3}));
  const ValueId w = tape.leaf(Tensor({1, 1, 5, 5}));
  CHECK_THROWS_AS(tape.conv2d(x, w, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d output shape formula") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({2, 3, 8, 8}));
  const ValueId w = tape.leaf(Tensor({4, 3, 3, 3}));
  const Shape s = tape.value(tape.conv2d(x, w, 2, 1)).shape();
  // H' = floor((8 + 2 - 3) / 2) + 1 = 4
  CHECK(s == Shape{2, 4, 4, 4});
}

TEST_CASE("relu forward") {
  Tape tape;
  const Tensor& out =
      tape.value(tape.relu(tape.leaf(Tensor({3}, {-1, 0, 2}))));
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
}

TEST_CASE("relu on all-positive input is the identity") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({10}, rng, 0.1, 2.0);
  Tape tape;
  const ValueId out = tape.relu(tape.leaf(x));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(tape.value(out)[i] == x[i]);
}

TEST_CASE("relu gradient masks negative inputs") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({2}, {-1, 2}));
  const ValueId out = tape.relu(x);
  const Gradient g = tape.backward_from(out, Tensor({2}, {5, 5}));
  CHECK(g.wrt(x)[0] == 0.0);
  CHECK(g.wrt(x)[1] == 5.0);
}

TEST_CASE("relu subgradient at exactly zero is zero") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({1}, {0.0}));
  const Gradient g = tape.backward_from(tape.relu(x), Tensor({1}, {1.0}));
  CHECK(g.wrt(x)[0] == 0.0);
}

TEST_CASE("softmax_cross_entropy equal logits gives ln 2") {
  Tape tape;
  const ValueId logits = tape.leaf(Tensor({1, 2}, {0, 0}));
  const ValueId loss = tape.softmax_cross_entropy(logits, {0});
  CHECK(tape.value(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy is stabilized against large logits") {
  Tape tape;
  const ValueId logits = tape.leaf(Tensor({1, 2}, {1000, 0}));
  const ValueId loss = tape.softmax_cross_entropy(logits, {0});
  CHECK(std::isfinite(tape.value(loss)[0]));
  CHECK(tape.value(loss)[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy gradient equals softmax minus onehot over N") {
  std::mt19937_64 rng(17);
  const Tensor logits = random_tensor({2, 3}, rng, -2, 2);
  Tape tape;
  const ValueId lid = tape.leaf(logits);
  const Gradient g = tape.backward(tape.softmax_cross_entropy(lid, {1, 2}));
  const std::vector<int> labels = {1, 2};
  for (std::size_t r = 0; r < 2; ++r) {
    double z = 0.0, mx = logits.at2(r, 0, 3);
    for (std::size_t k = 1; k < 3; ++k) mx = std::max(mx, logits.at2(r, k, 3));
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.at2(r, k, 3) - mx);
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = std::exp(logits.at2(r, k, 3) - mx) / z;
      const double want =
          (p - (static_cast<int>(k) == labels[r] ? 1.0 : 0.0)) / 2.0;
      CHECK(g.wrt(lid).at2(r, k, 3) == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("softmax_cross_entropy rejects out-of-range labels") {
  Tape tape;
  const ValueId logits = tape.leaf(Tensor({1, 2}, {0, 0}));
  CHECK_THROWS_AS(tape.softmax_cross_entropy(logits, {2}), std::out_of_range);
}

TEST_CASE("mse of equal tensors is zero") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor({3}, {1, 2, 3}));
  const ValueId b = tape.leaf(Tensor({3}, {1, 2, 3}));
  CHECK(tape.value(tape.mse(a, b))[0] == 0.0);
}

TEST_CASE("mse hand sum") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor({2}, {0, 0}));
  const ValueId b = tape.leaf(Tensor({2}, {1, 3}));
  CHECK(tape.value(tape.mse(a, b))[0] == doctest::Approx(5.0));
}

TEST_CASE("mse gradient is 2(pred-target)/n") {
  Tape tape;
  const ValueId a = tape.leaf(Tensor({2}, {0.5, -1.0}));
  const ValueId b = tape.leaf(Tensor({2}, {1.0, 3.0}));
  const Gradient g = tape.backward(tape.mse(a, b));
  CHECK(g.wrt(a)[0] == doctest::Approx(2.0 * (0.5 - 1.0) / 2.0));
  CHECK(g.wrt(a)[1] == doctest::Approx(2.0 * (-1.0 - 3.0) / 2.0));
}

TEST_CASE("mse shape mismatch errors") {
  Tape tape;
  CHECK_THROWS_AS(
      tape.mse(tape.leaf(Tensor({2})), tape.leaf(Tensor({3}))),
      std::invalid_argument);
}

TEST_CASE("backward of a leaf output is one") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor::scalar(3.5));
  CHECK(tape.backward(x).wrt(x)[0] == 1.0);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({3}, {1, 2, 3}));
  const Gradient g = tape.backward(tape.sum(tape.mul(x, x)));
  CHECK(g.wrt(x)[0] == doctest::Approx(2.0));
  CHECK(g.wrt(x)[1] == doctest::Approx(4.0));
  CHECK(g.wrt(x)[2] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar output") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("two backward calls from the same tape agree bitwise") {
  std::mt19937_64 rng(23);
  const Tensor x = random_tensor({4}, rng);
  Tape tape;
  const ValueId xid = tape.leaf(x);
  const ValueId out = tape.sum(tape.relu(tape.mul(xid, xid)));
  const Gradient g1 = tape.backward(out);
  const Gradient g2 = tape.backward(out);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(g1.wrt(xid)[i] == g2.wrt(xid)[i]);
}

TEST_CASE("finite_diff_grad of sum is all ones") {
  std::mt19937_64 rng(29);
  const Tensor x = random_tensor({5}, rng);
  const Tensor g = finite_diff_grad(
      [](const Tensor& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
        return s;
      },
      x, 1e-5);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(g[i] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("finite_diff_grad of squared norm") {
  const Tensor x({2}, {1, 2});
  const Tensor g = finite_diff_grad(
      [](const Tensor& v) { return v[0] * v[0] + v[1] * v[1]; }, x, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("gradient check per op over 100 random instances") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 4;
    SUBCASE("") {}
    {
      const Tensor x = random_tensor({n}, rng);
      check_grad([](Tape& t, ValueId v) { return t.sum(t.relu(v)); }, x);
      check_grad([](Tape& t, ValueId v) { return t.sum(t.tanh(v)); }, x);
      check_grad([](Tape& t, ValueId v) { return t.sum(t.mul(v, v)); }, x);
      check_grad(
          [](Tape& t, ValueId v) { return t.sum(t.scale(t.add_const(v, 0.3), -1.7)); },
          x);
      const Tensor tgt = random_tensor({n}, rng);
      check_grad([&](Tape& t, ValueId v) { return t.mse(v, t.leaf(tgt)); }, x);
    }
    {
      const Tensor logits = random_tensor({1, 4}, rng, -3, 3);
      const int label = static_cast<int>(rng() % 4);
      check_grad(
          [&](Tape& t, ValueId v) {
            return t.softmax_cross_entropy(v, {label});
          },
          logits);
      check_grad(
          [&](Tape& t, ValueId v) {
            return t.cw_margin(v, {label}, 0.2, false);
          },
          logits, 1e-3);
    }
    {
      const Tensor a = random_tensor({2, 3}, rng);
      const Tensor b = random_tensor({3, 2}, rng);
      check_grad(
          [&](Tape& t, ValueId v) { return t.sum(t.matmul(v, t.leaf(b))); }, a);
      check_grad(
          [&](Tape& t, ValueId v) { return t.sum(t.matmul(t.leaf(a), v)); }, b);
    }
    {
      const Tensor x = random_tensor({1, 2, 4, 4}, rng);
      const Tensor w = random_tensor({2, 2, 3, 3}, rng);
      check_grad(
          [&](Tape& t, ValueId v) {
            return t.sum(t.conv2d(v, t.leaf(w), 1, 1));
          },
          x);
      check_grad(
          [&](Tape& t, ValueId v) {
            return t.sum(t.conv2d(t.leaf(x), v, 1, 1));
          },
          w);
    }
  }
}

TEST_CASE("forward evaluation is pure and bitwise deterministic") {
  std::mt19937_64 rng(55);
  const Tensor x = random_tensor({1, 1, 5, 5}, rng);
  const Tensor w = random_tensor({2, 1, 3, 3}, rng);
  auto run = [&] {
    Tape tape;
    const ValueId out =
        tape.sum(tape.relu(tape.conv2d(tape.leaf(x), tape.leaf(w), 1, 1)));
    return tape.value(out)[0];
  };
  const double a = run();
  const double b = run();
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("tape_reshape keeps elements and routes gradients through") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  const ValueId r = tape_reshape(tape, x, {4});
  CHECK(tape.value(r).shape() == Shape{4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(tape.value(r)[i] == double(i + 1));
  const Gradient g = tape.backward(tape.sum(tape.mul(r, r)));
  CHECK(g.wrt(x).shape() == Shape{2, 2});
  CHECK(g.wrt(x)[3] == doctest::Approx(8.0));
}

TEST_CASE("custom node applies the supplied vjp") {
  Tape tape;
  const ValueId x = tape.leaf(Tensor({2}, {1, 2}));
  const ValueId c = tape.custom(
      x, Tensor({2}, {2, 4}), [](const Tensor&, const Tensor& up) {
        Tensor g = up;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0;
        return g;
      });
  const Gradient g = tape.backward(tape.sum(c));
  CHECK(g.wrt(x)[0] == 2.0);
  CHECK(g.wrt(x)[1] == 2.0);
}
