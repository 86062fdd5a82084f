// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "hmnet/errors.hpp"
#include "hmnet/ops.hpp"
#include "op_cases.hpp"
#include "support.hpp"

using namespace hmnet;
using hmnet::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor construction checks shape against data") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK(t[5] == 1.5);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(t.dim(2), IndexError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("copies alias, clone does not") {
  Tensor a({2}, 1.0);
  Tensor b = a;
  b[0] = 7;
  CHECK(a[0] == 7);
  CHECK(a.same(b));
  Tensor c = a.clone();
  c[1] = 9;
  CHECK(a[1] == 1.0);
  CHECK_FALSE(a.same(c));
}

TEST_CASE("matmul examples") {
  Graph g;
  Tensor id({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {5, 6, 7, 8});
  CHECK(values(ops::matmul(g, id, m)) == std::vector<double>{5, 6, 7, 8});
  // Hand multiplication: 1*3 + 2*4.
  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  CHECK(ops::matmul(g, row, col).item() == 11.0);
  CHECK_THROWS_AS(ops::matmul(g, Tensor({2, 3}), Tensor({4, 5})), DimensionError);
  try {
    ops::matmul(g, Tensor({2, 3}), Tensor({4, 5}));
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("matmul_nt equals matmul with a transposed operand") {
  Rng rng(3);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({5, 4}, rng);
  Tensor bt({4, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) bt[j * 5 + i] = b[i * 4 + j];
  Graph g = Graph::inference();
  auto x = values(ops::matmul_nt(g, a, b));
  auto y = values(ops::matmul(g, a, bt));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-14));
}

TEST_CASE("softmax examples") {
  Graph g = Graph::inference();
  auto s = values(ops::softmax(g, Tensor({3}, {0, 0, 0}), 0));
  for (double v : s) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  s = values(ops::softmax(g, Tensor({2}, {1000, 1000}), 0));
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  // Scalar oracle: exp(1) / (exp(1) + exp(2)).
  s = values(ops::softmax(g, Tensor({2}, {1, 2}), 0));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(s[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-15));
  CHECK(s[0] == doctest::Approx(0.2689414213699951));
  CHECK_THROWS_AS(ops::softmax(g, Tensor({2, 2}), 2), IndexError);
}

TEST_CASE("softmax maps -inf to exactly zero and rows sum to one") {
  Graph g = Graph::inference();
  const double ninf = -std::numeric_limits<double>::infinity();
  auto s = values(ops::softmax(g, Tensor({1, 3}, {0.3, ninf, -0.2}), 1));
  CHECK(s[1] == 0.0);
  CHECK_THROWS_AS(ops::softmax(g, Tensor({1, 2}, {ninf, ninf}), 1), ContractError);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, 20.0);
    auto p = values(ops::softmax(g, x, 1));
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(p[r * 7 + c] >= 0.0);
        total += p[r * 7 + c];
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Graph g = Graph::inference();
  Tensor ones({2}, 1.0), zeros({2}, 0.0);
  auto y = values(ops::layer_norm(g, Tensor({1, 2}, {4, 4}), ones, zeros, kLayerNormEps));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  // Closed form: mean 2, std 1.
  y = values(ops::layer_norm(g, Tensor({1, 2}, {1, 3}), ones, zeros, 0.0));
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-15));
  auto shifted = values(ops::layer_norm(g, Tensor({1, 2}, {1, 3}), ones, Tensor({2}, 5.0), 0.0));
  CHECK(shifted[0] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(shifted[1] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK_THROWS_AS(ops::layer_norm(g, Tensor({1, 3}), ones, zeros, 0.0), DimensionError);
}

TEST_CASE("backward examples") {
  Graph g;
  Tensor x({2, 3}, 0.5);
  x.set_requires_grad(true);
  g.backward(ops::sum(g, x));
  for (double v : x.grad()) CHECK(v == 1.0);

  Graph g2;
  Tensor y({2}, {1, 2});
  y.set_requires_grad(true);
  g2.backward(ops::sum(g2, ops::mul(g2, y, y)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  Graph g3;
  Tensor z({2}, {1, 2});
  z.set_requires_grad(true);
  CHECK_THROWS_AS(g3.backward(ops::scale(g3, z, 2.0)), ContractError);
}

TEST_CASE("participating tensors without a path to the loss get zero gradients") {
  Graph g;
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  b.mutable_grad()[0] = 99;  // stale value from an earlier graph
  Tensor unused = ops::scale(g, b, 2.0);
  g.backward(ops::sum(g, a));
  CHECK(b.grad()[0] == 0.0);
  CHECK(b.grad()[1] == 0.0);
  CHECK(a.grad()[0] == 1.0);
}

TEST_CASE("gradients accumulate over repeated uses of one tensor") {
  Graph g;
  Tensor x({2}, {1, -2});
  x.set_requires_grad(true);
  g.backward(ops::sum(g, ops::add(g, x, ops::scale(g, x, 3.0))));
  CHECK(x.grad()[0] == 4.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("inference graphs record nothing") {
  Graph g = Graph::inference();
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  ops::sum(g, ops::mul(g, x, x));
  CHECK(g.size() == 0);
}

TEST_CASE("every op passes the finite-difference check on random 3x4 inputs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& c : hmnet::testing::op_cases(seed)) {
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(hmnet::testing::gradcheck(c.loss, c.inputs) < 1e-6);
    }
  }
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    std::vector<double> out;
    for (const auto& c : hmnet::testing::op_cases(42)) {
      Graph g;
      Tensor loss = c.loss(g);
      g.backward(loss);
      out.push_back(loss.item());
      for (const auto& t : c.inputs) out.insert(out.end(), t.grad().begin(), t.grad().end());
    }
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("tensor files round-trip exactly") {
  Rng rng(5);
  Tensor t = random_tensor({2, 3, 4}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  Tensor back = read_tensor(ss);
  CHECK(back.shape() == t.shape());
  CHECK(values(back) == values(t));

  const std::string path = hmnet::testing::temp_dir("tensor_io") + "/t.hmt";
  save_tensor(path, t);
  CHECK(values(load_tensor(path)) == values(t));

  std::stringstream bad("HMT0garbage");
  CHECK_THROWS_AS(read_tensor(bad), ParseError);
  CHECK_THROWS_AS(load_tensor(path + ".missing"), IoError);
}

TEST_CASE("tensor file header is little-endian with the documented layout") {
  Tensor t({1, 2}, {1.0, -2.0});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 2 * 8 + 2 * 8);
  CHECK(bytes.substr(0, 4) == "HMT1");
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  CHECK(static_cast<unsigned char>(bytes[16]) == 2);
  double first;
  std::memcpy(&first, bytes.data() + 24, 8);
  CHECK(first == 1.0);
}
