// Copyright 2026 The mcqa Authors.
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

#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "doctest.h"
#include "mcqa/autodiff.hpp"
#include "mcqa/error.hpp"
#include "mcqa/gradcheck.hpp"
#include "support.hpp"

using namespace mcqa;

namespace {

// Entries bounded away from zero and from each other so ReLU and max/min
// kinks sit far outside the difference stencil.
Matrix<double> spread_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double mag = 0.2 + 0.05 * static_cast<double>(i) + 0.01 * rng.uniform();
    m.data()[i] = (rng.below(2) ? 1.0 : -1.0) * mag;
  }
  return m;
}

template <typename Op>
double check_op(Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc, Op op, std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore<double> store;
  store.add("a", spread_matrix(ar, ac, rng));
  store.add("b", spread_matrix(br, bc, rng));
  Matrix<double> probe;
  {
    Tape<double> t;
    const auto out = op(t.parameter(store.at("a")), t.parameter(store.at("b")));
    probe = test::random_matrix(out.rows(), out.cols(), rng);
  }
  auto loss = [&](auto& tape, auto& params) {
    using T = std::remove_cvref_t<decltype(params[0].value(0, 0))>;
    const auto out = op(tape.parameter(params.at("a")), tape.parameter(params.at("b")));
    return dot(out, tape.constant(probe.cast<T>()));
  };
  return finite_difference_check_extended(store, loss).max_relative_error;
}

template <typename T>
Matrix<T> fixed_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  Rng rng(seed);
  return test::random_matrix(r, c, rng, 0.5).cast<T>();
}

// Calls f(name, a_rows, a_cols, b_rows, b_cols, op) for every op under test.
template <typename F>
void for_each_op(F&& f) {
  f("matmul", 3, 4, 4, 2, [](auto a, auto b) { return matmul(a, b); });
  f("add broadcast", 3, 4, 1, 4, [](auto a, auto b) { return add(a, b); });
  f("sub broadcast", 3, 4, 3, 1, [](auto a, auto b) { return sub(a, b); });
  f("mul broadcast", 3, 4, 1, 4, [](auto a, auto b) { return mul(a, b); });
  f("scale", 2, 3, 1, 1, [](auto a, auto b) { return add(scale(a, decltype(a.scalar())(2.5)), b); });
  f("transpose", 2, 3, 3, 2, [](auto a, auto b) { return mul(transpose(a), b); });
  f("concat rows", 2, 3, 1, 3, [](auto a, auto b) {
    const decltype(a) parts[] = {a, b, a};
    return concat<decltype(a.scalar())>(parts, 0);
  });
  f("concat cols", 2, 3, 2, 1, [](auto a, auto b) {
    const decltype(a) parts[] = {b, a};
    return concat<decltype(a.scalar())>(parts, 1);
  });
  f("slices", 4, 5, 1, 1, [](auto a, auto b) { return add(slice_cols(slice_rows(a, 1, 2), 2, 3), b); });
  f("element", 3, 3, 1, 1, [](auto a, auto b) { return mul(element(a, 2, 1), b); });
  f("relu", 3, 4, 1, 1, [](auto a, auto b) { return mul(relu(a), b); });
  f("tanh", 3, 4, 1, 1, [](auto a, auto b) { return mul(tanh(a), b); });
  f("sigmoid", 3, 4, 1, 1, [](auto a, auto b) { return mul(sigmoid(a), b); });
  f("exp log", 3, 4, 1, 1, [](auto a, auto b) { return log(add(exp(a), exp(b))); });
  f("softmax rows", 3, 4, 1, 1, [](auto a, auto) { return softmax(scale(a, decltype(a.scalar())(3)), 1); });
  f("softmax cols", 3, 4, 1, 4, [](auto a, auto b) { return softmax(add(a, b), 0); });
  f("log_softmax", 3, 4, 1, 1, [](auto a, auto b) { return log_softmax(mul(a, b), 0); });
  f("logsumexp", 3, 4, 1, 1, [](auto a, auto b) { return logsumexp(mul(a, b), 1); });
  f("logsumexp_all", 3, 4, 1, 1, [](auto a, auto b) { return logsumexp_all(mul(a, b)); });
  f("sum", 3, 4, 1, 1, [](auto a, auto b) { return mul(sum(a, 0), b); });
  f("sum_all", 3, 4, 1, 1, [](auto a, auto b) { return mul(sum_all(a), b); });
  f("max", 3, 4, 1, 1, [](auto a, auto b) { return mul(max(a, 0), b); });
  f("min", 3, 4, 1, 1, [](auto a, auto b) { return mul(min(a, 1), b); });
  f("mean", 3, 4, 1, 1, [](auto a, auto b) { return mul(mean(a, 1), b); });
  f("stddev", 4, 3, 1, 1, [](auto a, auto b) { return mul(stddev(a, 0), b); });
  f("dot", 3, 4, 3, 4, [](auto a, auto b) { return dot(a, b); });
  f("gru", 5, 3, 2, 6, [](auto x, auto u) {
    using T = decltype(x.scalar());
    auto& t = x.tape();
    const Segment segs[] = {{0, 2}, {2, 3}};
    return gru<T>(x, t.constant(fixed_matrix<T>(3, 6, 3)), u, t.constant(fixed_matrix<T>(1, 6, 4)), segs, false);
  });
  f("gru reverse", 4, 3, 2, 6, [](auto x, auto u) {
    using T = decltype(x.scalar());
    auto& t = x.tape();
    return gru<T>(x, t.constant(fixed_matrix<T>(3, 6, 5)), u, t.constant(Matrix<T>::Zero(1, 6)), {}, true);
  });
  f("segment attention pool", 5, 3, 5, 1, [](auto h, auto logits) {
    const Segment segs[] = {{0, 3}, {3, 2}};
    return segment_attention_pool<decltype(h.scalar())>(h, logits, segs);
  });
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("forward examples") {
    Tape<double> t;
    const auto s = softmax(t.constant(Matrix<double>::Zero(1, 2)), 1);
    CHECK(s.value()(0, 0) == 0.5);
    CHECK(s.value()(0, 1) == 0.5);
    Matrix<double> x(1, 2);
    x << -3.0, 2.0;
    const auto r = relu(t.constant(x));
    CHECK(r.value()(0, 0) == 0.0);
    CHECK(r.value()(0, 1) == 2.0);
    const auto v = t.constant(x);
    CHECK(dropout(v, 0.2, false, nullptr).id() == v.id());
  }

  TEST_CASE("softmax sums to one and ignores shifts") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      Tape<double> t;
      const Matrix<double> x = test::random_matrix(3, 5, rng, 10.0);
      const Matrix<double> p = softmax(t.constant(x), 1).value();
      const Matrix<double> shifted = x.array() + 123.0;
      const Matrix<double> q = softmax(t.constant(shifted), 1).value();
      for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-6);
      CHECK(test::max_abs_diff(p, q) <= 1e-6);
    }
  }

  TEST_CASE("trivial gradients") {
    Rng rng(2);
    ParameterStore<double> store;
    auto& theta = store.add("theta", test::random_matrix(2, 3, rng));
    {
      Tape<double> t;
      t.backward(sum_all(t.parameter(theta)));
    }
    CHECK(theta.grad.isOnes());
    store.zero_grad();
    {
      Tape<double> t;
      auto p = t.parameter(theta);
      t.backward(dot(p, p));
    }
    CHECK(test::max_abs_diff(theta.grad, 2.0 * theta.value) == 0.0);
  }

  TEST_CASE("gradients accumulate across backward calls") {
    ParameterStore<double> store;
    auto& theta = store.add("theta", Matrix<double>::Ones(1, 2));
    for (int i = 0; i < 2; ++i) {
      Tape<double> t;
      t.backward(sum_all(t.parameter(theta)));
    }
    CHECK(theta.grad(0, 1) == 2.0);
  }

  TEST_CASE("errors") {
    Tape<double> t;
    const auto a = t.variable(Matrix<double>::Ones(2, 3));
    const auto b = t.variable(Matrix<double>::Ones(4, 5));
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    try {
      add(a, b);
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("2x3") != std::string::npos);
      CHECK(msg.find("4x5") != std::string::npos);
    }
    CHECK_THROWS_AS(t.backward(a), UsageError);
    ParameterStore<double> store;
    store.add("x", Matrix<double>::Zero(1, 1));
    CHECK_THROWS_AS(store.add("x", Matrix<double>::Zero(1, 1)), UsageError);
    CHECK_THROWS_AS(store.at("y"), UsageError);
  }

  TEST_CASE("finite difference oracle on analytic functions") {
    ParameterStore<double> store;
    auto& x = store.add("x", Matrix<double>::Constant(1, 1, 3.0));
    std::function<Var<double>(Tape<double>&)> square = [&](Tape<double>& t) {
      auto v = t.parameter(x);
      return mul(v, v);
    };
    const auto r = finite_difference_check<double>(store, square);
    CHECK(r.analytic == 6.0);
    CHECK(r.max_relative_error <= 1e-9);

    Matrix<double> coeff(1, 3);
    coeff << 0.5, -2.0, 7.0;
    auto& y = store.add("y", Matrix<double>::Ones(1, 3));
    std::function<Var<double>(Tape<double>&)> linear = [&](Tape<double>& t) {
      return dot(t.parameter(y), t.constant(coeff));
    };
    CHECK(finite_difference_check<double>(store, linear).max_relative_error <= 1e-9);
  }

  TEST_CASE("every op passes the 64-bit gradient check at three seeds") {
    for_each_op([](const char* name, Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc, auto op) {
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(std::string(name));
        CAPTURE(seed);
        CHECK(check_op(ar, ac, br, bc, op, seed) <= 1e-5);
      }
    });
  }

  TEST_CASE("ops pass the 32-bit gradient check") {
    Rng rng(9);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ParameterStore<float> store;
      store.add("a", test::random_matrix(3, 4, rng).cast<float>());
      store.add("w", test::random_matrix(4, 2, rng).cast<float>());
      auto loss = [](auto& t, auto& params) {
        return logsumexp_all(matmul(tanh(t.parameter(params.at("a"))), t.parameter(params.at("w"))));
      };
      CAPTURE(seed);
      CHECK(finite_difference_check_extended(store, loss).max_relative_error <= 1e-3);
    }
  }

  TEST_CASE("dropout keeps or scales entries and is seeded") {
    Tape<double> t;
    const auto x = t.constant(Matrix<double>::Ones(20, 20));
    Rng r1(5), r2(5);
    const Matrix<double> a = dropout(x, 0.25, true, &r1).value();
    const Matrix<double> b = dropout(x, 0.25, true, &r2).value();
    CHECK(a == b);
    std::size_t kept = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double v = a.data()[i];
      CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12));
      kept += v != 0.0;
    }
    CHECK(kept > 250);
    CHECK(kept < 350);
  }

  TEST_CASE("gru with zero parameters outputs zeros") {
    Tape<double> t;
    Rng rng(6);
    const auto x = t.constant(test::random_matrix(4, 3, rng));
    const auto h = gru<double>(x, t.constant(Matrix<double>::Zero(3, 6)), t.constant(Matrix<double>::Zero(2, 6)),
                               t.constant(Matrix<double>::Zero(1, 6)), {}, false);
    CHECK(h.value().isZero());
  }

  TEST_CASE("gru matches a step-by-step recurrence") {
    Rng rng(8);
    const Matrix<double> x = test::random_matrix(3, 2, rng);
    const Matrix<double> w = test::random_matrix(2, 6, rng);
    const Matrix<double> u = test::random_matrix(2, 6, rng);
    const Matrix<double> bias = test::random_matrix(1, 6, rng);
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (bool reverse : {false, true}) {
      Tape<double> t;
      const Matrix<double> got =
          gru<double>(t.constant(x), t.constant(w), t.constant(u), t.constant(bias), {}, reverse).value();
      double h[2] = {0.0, 0.0};
      for (int step = 0; step < 3; ++step) {
        const int row = reverse ? 2 - step : step;
        double z[2], r[2], n[2];
        for (int k = 0; k < 2; ++k) {
          double az = bias(0, k), ar = bias(0, 2 + k);
          for (int i = 0; i < 2; ++i) az += x(row, i) * w(i, k) + h[i] * u(i, k);
          for (int i = 0; i < 2; ++i) ar += x(row, i) * w(i, 2 + k) + h[i] * u(i, 2 + k);
          z[k] = sig(az);
          r[k] = sig(ar);
        }
        for (int k = 0; k < 2; ++k) {
          double an = bias(0, 4 + k);
          for (int i = 0; i < 2; ++i) an += x(row, i) * w(i, 4 + k) + r[i] * h[i] * u(i, 4 + k);
          n[k] = std::tanh(an);
        }
        for (int k = 0; k < 2; ++k) h[k] = (1.0 - z[k]) * h[k] + z[k] * n[k];
        CHECK(std::abs(got(row, 0) - h[0]) <= 1e-12);
        CHECK(std::abs(got(row, 1) - h[1]) <= 1e-12);
      }
    }
  }

  TEST_CASE("identical inputs give bit-identical outputs") {
    auto run = [] {
      Rng rng(12);
      Tape<float> t;
      const auto x = t.constant(test::random_matrix(6, 4, rng).cast<float>());
      const auto w = t.constant(test::random_matrix(4, 4, rng).cast<float>());
      return Matrix<float>(softmax(matmul(x, w), 1).value());
    };
    CHECK(run() == run());
  }
}
