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

#include "mcqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "mcqa/error.hpp"

namespace mcqa {

// ---------------------------------------------------------------------------
// ParameterStore

template <typename T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Matrix<T> value) {
  if (index_.count(name)) throw UsageError("duplicate parameter name '" + name + "'");
  index_.emplace(name, params_.size());
  Matrix<T> grad = Matrix<T>::Zero(value.rows(), value.cols());
  params_.push_back(Parameter<T>{name, std::move(value), std::move(grad)});
  return params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw UsageError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::size_t ParameterStore<T>::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
T Var<T>::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar() on a non 1x1 value");
  return v(0, 0);
}

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::variable(Matrix<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  auto it = param_nodes_.find(&param);
  if (it != param_nodes_.end()) return Var<T>(this, it->second);
  nodes_.push_back(Node{param.value, {}, {}, &param, true});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&param, id);
  return Var<T>(this, id);
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, std::span<const Var<T>> inputs, Backward fn) {
  bool needs = false;
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw UsageError("operands recorded on different tapes");
    needs = needs || requires_grad(v.id());
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : Backward{}, nullptr, needs});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Matrix<T>& Tape<T>::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  const auto& v = loss.value();
  if (v.rows() != 1 || v.cols() != 1) {
    std::ostringstream msg;
    msg << "backward needs a scalar loss, got [" << v.rows() << "x" << v.cols() << "]";
    throw UsageError(msg.str());
  }
  if (!std::isfinite(static_cast<double>(v(0, 0)))) throw NumericError("backward on a non-finite loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(loss.id())].grad = Matrix<T>::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_)
    if (n.param && n.grad.size() != 0) n.param->grad += n.grad;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream s;
  s << "[" << r << "x" << c << "]";
  return s.str();
}

template <typename T>
[[noreturn]] void shape_fail(const char* op, const Matrix<T>& a, const Matrix<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.rows(), a.cols()) + " and " +
                   shape_str(b.rows(), b.cols()));
}

void check_axis(int axis) {
  if (axis != 0 && axis != 1) throw UsageError("axis must be 0 or 1");
}

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

template <typename T>
Matrix<T> expand(const Matrix<T>& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

/// Sums `g` down to the shape of a broadcast operand.
template <typename T>
Matrix<T> reduce_to(const Matrix<T>& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix<T> out = g;
  if (rows == 1 && g.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && g.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

template <typename T, typename F, typename G>
Var<T> unary(Var<T> a, F forward, G derivative) {
  Matrix<T> y = a.value().unaryExpr(forward);
  return a.tape().record(std::move(y), {a}, [a, derivative](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& x = t.value(a.id());
    const Matrix<T>& y = t.value(self);
    t.accumulate(a.id(), g.cwiseProduct(derivative(x, y)));
  });
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& x) {
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const T m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return y;
}

template <typename T>
Matrix<T> softmax_axis(const Matrix<T>& x, int axis) {
  if (axis == 1) return softmax_rows<T>(x);
  Matrix<T> xt = x.transpose();
  return softmax_rows<T>(xt).transpose();
}

template <typename T>
Matrix<T> lse_axis(const Matrix<T>& x, int axis) {
  if (axis == 1) {
    Matrix<T> out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const T m = x.row(i).maxCoeff();
      out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    return out;
  }
  Matrix<T> out(1, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const T m = x.col(j).maxCoeff();
    out(0, j) = m + std::log((x.col(j).array() - m).exp().sum());
  }
  return out;
}

/// Broadcasts a reduced gradient (1 x c or r x 1) back over `rows x cols`.
template <typename T>
Matrix<T> spread(const Matrix<T>& g, Eigen::Index rows, Eigen::Index cols) {
  return g.replicate(rows / g.rows(), cols / g.cols());
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra and elementwise arithmetic

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Matrix<T> y = a.value() * b.value();
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * t.value(b.id()).transpose());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), t.value(a.id()).transpose() * g);
  });
}

namespace {

enum class Arith { add, sub, mul };

template <typename T>
Var<T> arith(Var<T> a, Var<T> b, Arith kind, const char* name) {
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  bool ok = true;
  const Eigen::Index r = broadcast_dim(av.rows(), bv.rows(), ok);
  const Eigen::Index c = broadcast_dim(av.cols(), bv.cols(), ok);
  if (!ok) shape_fail(name, av, bv);
  Matrix<T> y;
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  if (same) {
    if (kind == Arith::add) y = av + bv;
    if (kind == Arith::sub) y = av - bv;
    if (kind == Arith::mul) y = av.cwiseProduct(bv);
  } else {
    const Matrix<T> ae = expand<T>(av, r, c), be = expand<T>(bv, r, c);
    if (kind == Arith::add) y = ae + be;
    if (kind == Arith::sub) y = ae - be;
    if (kind == Arith::mul) y = ae.cwiseProduct(be);
  }
  return a.tape().record(std::move(y), {a, b}, [a, b, kind, r, c](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& av = t.value(a.id());
    const Matrix<T>& bv = t.value(b.id());
    if (t.requires_grad(a.id())) {
      if (kind == Arith::mul)
        t.accumulate(a.id(), reduce_to<T>(g.cwiseProduct(expand<T>(bv, r, c)), av.rows(), av.cols()));
      else
        t.accumulate(a.id(), reduce_to<T>(g, av.rows(), av.cols()));
    }
    if (t.requires_grad(b.id())) {
      if (kind == Arith::mul)
        t.accumulate(b.id(), reduce_to<T>(g.cwiseProduct(expand<T>(av, r, c)), bv.rows(), bv.cols()));
      else if (kind == Arith::sub)
        t.accumulate(b.id(), reduce_to<T>(-g, bv.rows(), bv.cols()));
      else
        t.accumulate(b.id(), reduce_to<T>(g, bv.rows(), bv.cols()));
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return arith(a, b, Arith::add, "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return arith(a, b, Arith::sub, "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return arith(a, b, Arith::mul, "mul");
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Matrix<T> y = a.value() * factor;
  return a.tape().record(std::move(y), {a}, [a, factor](Tape<T>& t, int self) {
    t.accumulate(a.id(), t.grad(self) * factor);
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Matrix<T> y = a.value().transpose();
  return a.tape().record(std::move(y), {a}, [a](Tape<T>& t, int self) {
    t.accumulate(a.id(), t.grad(self).transpose());
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  check_axis(axis);
  if (parts.empty()) throw UsageError("concat of zero tensors");
  Eigen::Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (axis == 0) {
      if (v.cols() != parts[0].cols()) shape_fail("concat", parts[0].value(), v);
      rows += v.rows();
      cols = v.cols();
    } else {
      if (v.rows() != parts[0].rows()) shape_fail("concat", parts[0].value(), v);
      cols += v.cols();
      rows = v.rows();
    }
  }
  Matrix<T> y(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (axis == 0) {
      y.middleRows(off, v.rows()) = v;
      off += v.rows();
    } else {
      y.middleCols(off, v.cols()) = v;
      off += v.cols();
    }
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(y), std::span<const Var<T>>(inputs),
                                [inputs, axis](Tape<T>& t, int self) {
                                  const Matrix<T>& g = t.grad(self);
                                  Eigen::Index off = 0;
                                  for (const auto& p : inputs) {
                                    const auto& v = t.value(p.id());
                                    if (axis == 0) {
                                      t.accumulate(p.id(), g.middleRows(off, v.rows()));
                                      off += v.rows();
                                    } else {
                                      t.accumulate(p.id(), g.middleCols(off, v.cols()));
                                      off += v.cols();
                                    }
                                  }
                                });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                     shape_str(a.rows(), a.cols()));
  Matrix<T> y = a.value().middleRows(begin, count);
  return a.tape().record(std::move(y), {a}, [a, begin, count](Tape<T>& t, int self) {
    t.grad_buffer(a.id()).middleRows(begin, count) += t.grad(self);
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                     shape_str(a.rows(), a.cols()));
  Matrix<T> y = a.value().middleCols(begin, count);
  return a.tape().record(std::move(y), {a}, [a, begin, count](Tape<T>& t, int self) {
    t.grad_buffer(a.id()).middleCols(begin, count) += t.grad(self);
  });
}

template <typename T>
Var<T> element(Var<T> a, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || col < 0 || row >= a.rows() || col >= a.cols())
    throw ShapeError("element (" + std::to_string(row) + "," + std::to_string(col) + ") out of " +
                     shape_str(a.rows(), a.cols()));
  Matrix<T> y(1, 1);
  y(0, 0) = a.value()(row, col);
  return a.tape().record(std::move(y), {a}, [a, row, col](Tape<T>& t, int self) {
    t.grad_buffer(a.id())(row, col) += t.grad(self)(0, 0);
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](const Matrix<T>& x, const Matrix<T>&) -> Matrix<T> {
        return (x.array() > T(0)).template cast<T>().matrix();
      });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary(
      a, [](T x) { return std::tanh(x); },
      [](const Matrix<T>&, const Matrix<T>& y) -> Matrix<T> { return (T(1) - y.array().square()).matrix(); });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      a, [](T x) { return sigmoid_scalar(x); },
      [](const Matrix<T>&, const Matrix<T>& y) -> Matrix<T> { return (y.array() * (T(1) - y.array())).matrix(); });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary(
      a, [](T x) { return std::exp(x); }, [](const Matrix<T>&, const Matrix<T>& y) -> Matrix<T> { return y; });
}

template <typename T>
Var<T> log(Var<T> a) {
  return unary(
      a, [](T x) { return std::log(x); },
      [](const Matrix<T>& x, const Matrix<T>&) -> Matrix<T> { return x.cwiseInverse(); });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  check_axis(axis);
  Matrix<T> y = softmax_axis<T>(a.value(), axis);
  return a.tape().record(std::move(y), {a}, [a, axis](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    const Matrix<T>& y = t.value(self);
    Matrix<T> gy = g.cwiseProduct(y);
    Matrix<T> s = axis == 1 ? Matrix<T>(gy.rowwise().sum()) : Matrix<T>(gy.colwise().sum());
    t.accumulate(a.id(), y.cwiseProduct(g - spread<T>(s, y.rows(), y.cols())));
  });
}

template <typename T>
Var<T> log_softmax(Var<T> a, int axis) {
  check_axis(axis);
  const Matrix<T>& x = a.value();
  Matrix<T> lse = lse_axis<T>(x, axis);
  Matrix<T> y = x - spread<T>(lse, x.rows(), x.cols());
  return a.tape().record(std::move(y), {a}, [a, axis](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T> p = t.value(self).array().exp().matrix();
    Matrix<T> s = axis == 1 ? Matrix<T>(g.rowwise().sum()) : Matrix<T>(g.colwise().sum());
    t.accumulate(a.id(), g - p.cwiseProduct(spread<T>(s, p.rows(), p.cols())));
  });
}

template <typename T>
Var<T> logsumexp(Var<T> a, int axis) {
  check_axis(axis);
  if (a.value().size() == 0) throw ShapeError("logsumexp of an empty tensor");
  Matrix<T> y = lse_axis<T>(a.value(), axis);
  return a.tape().record(std::move(y), {a}, [a](Tape<T>& t, int self) {
    const Matrix<T>& x = t.value(a.id());
    const Matrix<T>& y = t.value(self);
    Matrix<T> p = (x - spread<T>(y, x.rows(), x.cols())).array().exp().matrix();
    t.accumulate(a.id(), p.cwiseProduct(spread<T>(t.grad(self), x.rows(), x.cols())));
  });
}

template <typename T>
Var<T> logsumexp_all(Var<T> a) {
  const Matrix<T>& x = a.value();
  if (x.size() == 0) throw ShapeError("logsumexp of an empty tensor");
  const T m = x.maxCoeff();
  Matrix<T> y(1, 1);
  y(0, 0) = m + std::log((x.array() - m).exp().sum());
  return a.tape().record(std::move(y), {a}, [a](Tape<T>& t, int self) {
    const Matrix<T>& x = t.value(a.id());
    const T lse = t.value(self)(0, 0);
    t.accumulate(a.id(), ((x.array() - lse).exp() * t.grad(self)(0, 0)).matrix());
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(Var<T> a, int axis) {
  check_axis(axis);
  Matrix<T> y = axis == 1 ? Matrix<T>(a.value().rowwise().sum()) : Matrix<T>(a.value().colwise().sum());
  return a.tape().record(std::move(y), {a}, [a](Tape<T>& t, int self) {
    const auto& x = t.value(a.id());
    t.accumulate(a.id(), spread<T>(t.grad(self), x.rows(), x.cols()));
  });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  Matrix<T> y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape().record(std::move(y), {a}, [a](Tape<T>& t, int self) {
    const auto& x = t.value(a.id());
    t.accumulate(a.id(), Matrix<T>::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

namespace {

template <typename T>
Var<T> extremum(Var<T> a, int axis, bool take_max) {
  check_axis(axis);
  const Matrix<T>& x = a.value();
  if (x.size() == 0) throw ShapeError("max/min of an empty tensor");
  const Eigen::Index lanes = axis == 1 ? x.rows() : x.cols();
  const Eigen::Index len = axis == 1 ? x.cols() : x.rows();
  Matrix<T> y = axis == 1 ? Matrix<T>(lanes, 1) : Matrix<T>(1, lanes);
  auto where = std::make_shared<std::vector<Eigen::Index>>(static_cast<std::size_t>(lanes));
  for (Eigen::Index l = 0; l < lanes; ++l) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < len; ++k) {
      const T cur = axis == 1 ? x(l, k) : x(k, l);
      const T top = axis == 1 ? x(l, best) : x(best, l);
      if (take_max ? cur > top : cur < top) best = k;
    }
    (*where)[static_cast<std::size_t>(l)] = best;
    y(axis == 1 ? l : 0, axis == 1 ? 0 : l) = axis == 1 ? x(l, best) : x(best, l);
  }
  return a.tape().record(std::move(y), {a}, [a, axis, where](Tape<T>& t, int self) {
    const Matrix<T>& g = t.grad(self);
    Matrix<T>& ga = t.grad_buffer(a.id());
    for (std::size_t l = 0; l < where->size(); ++l) {
      const auto li = static_cast<Eigen::Index>(l);
      if (axis == 1)
        ga(li, (*where)[l]) += g(li, 0);
      else
        ga((*where)[l], li) += g(0, li);
    }
  });
}

}  // namespace

template <typename T>
Var<T> max(Var<T> a, int axis) {
  return extremum(a, axis, true);
}

template <typename T>
Var<T> min(Var<T> a, int axis) {
  return extremum(a, axis, false);
}

template <typename T>
Var<T> mean(Var<T> a, int axis) {
  check_axis(axis);
  const Eigen::Index n = axis == 1 ? a.cols() : a.rows();
  if (n == 0) throw ShapeError("mean over an empty axis");
  return scale(sum(a, axis), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> stddev(Var<T> a, int axis) {
  check_axis(axis);
  const Matrix<T>& x = a.value();
  const Eigen::Index n = axis == 1 ? x.cols() : x.rows();
  if (n == 0) throw ShapeError("stddev over an empty axis");
  Matrix<T> mu = axis == 1 ? Matrix<T>(x.rowwise().mean()) : Matrix<T>(x.colwise().mean());
  Matrix<T> centered = x - spread<T>(mu, x.rows(), x.cols());
  Matrix<T> sq = centered.array().square().matrix();
  Matrix<T> var = axis == 1 ? Matrix<T>(sq.rowwise().mean()) : Matrix<T>(sq.colwise().mean());
  Matrix<T> y = var.array().sqrt().matrix();
  return a.tape().record(std::move(y), {a}, [a, axis, n](Tape<T>& t, int self) {
    const Matrix<T>& x = t.value(a.id());
    const Matrix<T>& y = t.value(self);
    Matrix<T> mu = axis == 1 ? Matrix<T>(x.rowwise().mean()) : Matrix<T>(x.colwise().mean());
    Matrix<T> centered = x - spread<T>(mu, x.rows(), x.cols());
    // d sigma / d x_i = (x_i - mu) / (n sigma)
    Matrix<T> coef = y.unaryExpr([n](T s) { return s > T(0) ? T(1) / (static_cast<T>(n) * s) : T(0); });
    Matrix<T> scaled = t.grad(self).cwiseProduct(coef);
    t.accumulate(a.id(), centered.cwiseProduct(spread<T>(scaled, x.rows(), x.cols())));
  });
}

template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("dot", a.value(), b.value());
  Matrix<T> y(1, 1);
  y(0, 0) = a.value().cwiseProduct(b.value()).sum();
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape<T>& t, int self) {
    const T g = t.grad(self)(0, 0);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), t.value(b.id()) * g);
    if (t.requires_grad(b.id())) t.accumulate(b.id(), t.value(a.id()) * g);
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate, bool train, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  if (!rng) throw UsageError("training-mode dropout needs a generator");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<Matrix<T>>(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask->size(); ++i) mask->data()[i] = rng->uniform() < rate ? T(0) : keep_scale;
  Matrix<T> y = a.value().cwiseProduct(*mask);
  return a.tape().record(std::move(y), {a}, [a, mask](Tape<T>& t, int self) {
    t.accumulate(a.id(), t.grad(self).cwiseProduct(*mask));
  });
}

// ---------------------------------------------------------------------------
// Fused sequence ops

namespace {

template <typename T>
struct GruState {
  std::vector<Segment> segments;
  Matrix<T> z, r, n, hprev;  // len x h, one row per processed step
};

}  // namespace

template <typename T>
Var<T> gru(Var<T> x, Var<T> w, Var<T> u, Var<T> bias, std::span<const Segment> segments, bool reverse) {
  const Matrix<T>& X = x.value();
  const Matrix<T>& W = w.value();
  const Matrix<T>& U = u.value();
  const Matrix<T>& B = bias.value();
  const Eigen::Index h = U.rows();
  if (W.rows() != X.cols()) shape_fail("gru input", X, W);
  if (W.cols() != 3 * h || U.cols() != 3 * h) shape_fail("gru weights", W, U);
  if (B.rows() != 1 || B.cols() != 3 * h) shape_fail("gru bias", U, B);

  auto st = std::make_shared<GruState<T>>();
  if (segments.empty())
    st->segments.push_back(Segment{0, X.rows()});
  else
    st->segments.assign(segments.begin(), segments.end());
  for (const auto& s : st->segments)
    if (s.offset < 0 || s.length < 0 || s.offset + s.length > X.rows())
      throw ShapeError("gru segment outside " + shape_str(X.rows(), X.cols()));

  const Eigen::Index len = X.rows();
  Matrix<T> gx = X * W;
  gx.rowwise() += B.row(0);
  st->z = Matrix<T>::Zero(len, h);
  st->r = Matrix<T>::Zero(len, h);
  st->n = Matrix<T>::Zero(len, h);
  st->hprev = Matrix<T>::Zero(len, h);
  Matrix<T> out = Matrix<T>::Zero(len, h);
  Matrix<T> hcur(1, h), gh(1, 2 * h), rh(1, h);

  for (const auto& s : st->segments) {
    hcur.setZero();
    for (Eigen::Index k = 0; k < s.length; ++k) {
      const Eigen::Index row = reverse ? s.offset + s.length - 1 - k : s.offset + k;
      st->hprev.row(row) = hcur;
      gh.noalias() = hcur * U.leftCols(2 * h);
      for (Eigen::Index j = 0; j < h; ++j) {
        st->z(row, j) = sigmoid_scalar(gx(row, j) + gh(0, j));
        st->r(row, j) = sigmoid_scalar(gx(row, h + j) + gh(0, h + j));
      }
      rh = st->r.row(row).cwiseProduct(hcur);
      Matrix<T> cand = rh * U.rightCols(h);
      for (Eigen::Index j = 0; j < h; ++j) st->n(row, j) = std::tanh(gx(row, 2 * h + j) + cand(0, j));
      hcur = (Matrix<T>::Ones(1, h) - st->z.row(row)).cwiseProduct(hcur) + st->z.row(row).cwiseProduct(st->n.row(row));
      out.row(row) = hcur;
    }
  }

  return x.tape().record(std::move(out), {x, w, u, bias}, [x, w, u, bias, st, reverse](Tape<T>& t, int self) {
    const Matrix<T>& X = t.value(x.id());
    const Matrix<T>& W = t.value(w.id());
    const Matrix<T>& U = t.value(u.id());
    const Matrix<T>& dH = t.grad(self);
    const Eigen::Index h = U.rows();
    const Eigen::Index len = X.rows();
    Matrix<T> dGx = Matrix<T>::Zero(len, 3 * h);
    Matrix<T> dU = Matrix<T>::Zero(h, 3 * h);
    Matrix<T> carry(1, h), dh(1, h), dz(1, h), dn(1, h), dnpre(1, h), drh(1, h), dr(1, h), dzr(1, 2 * h);
    Matrix<T> hprev(1, h), rh(1, h);
    for (const auto& s : st->segments) {
      carry.setZero();
      for (Eigen::Index k = s.length - 1; k >= 0; --k) {
        const Eigen::Index row = reverse ? s.offset + s.length - 1 - k : s.offset + k;
        hprev = st->hprev.row(row);
        const auto z = st->z.row(row).array();
        const auto r = st->r.row(row).array();
        const auto n = st->n.row(row).array();
        dh = dH.row(row) + carry;
        dz = (dh.array() * (n - hprev.array())).matrix();
        dn = (dh.array() * z).matrix();
        carry = (dh.array() * (T(1) - z)).matrix();
        dnpre = (dn.array() * (T(1) - n.square())).matrix();
        rh = (r * hprev.array()).matrix();
        dU.rightCols(h).noalias() += rh.transpose() * dnpre;
        drh.noalias() = dnpre * U.rightCols(h).transpose();
        dr = (drh.array() * hprev.array()).matrix();
        carry += (drh.array() * r).matrix();
        dzr.leftCols(h) = (dz.array() * z * (T(1) - z)).matrix();
        dzr.rightCols(h) = (dr.array() * r * (T(1) - r)).matrix();
        dU.leftCols(2 * h).noalias() += hprev.transpose() * dzr;
        carry.noalias() += dzr * U.leftCols(2 * h).transpose();
        dGx.row(row).head(2 * h) = dzr.row(0);
        dGx.row(row).tail(h) = dnpre.row(0);
      }
    }
    if (t.requires_grad(x.id())) t.accumulate(x.id(), dGx * W.transpose());
    if (t.requires_grad(w.id())) t.accumulate(w.id(), X.transpose() * dGx);
    if (t.requires_grad(u.id())) t.accumulate(u.id(), dU);
    if (t.requires_grad(bias.id())) t.accumulate(bias.id(), Matrix<T>(dGx.colwise().sum()));
  });
}

template <typename T>
Var<T> segment_attention_pool(Var<T> h, Var<T> logits, std::span<const Segment> segments) {
  const Matrix<T>& H = h.value();
  const Matrix<T>& L = logits.value();
  if (L.rows() != H.rows() || L.cols() != 1) shape_fail("segment_attention_pool", H, L);
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  if (segs->empty()) segs->push_back(Segment{0, H.rows()});
  auto alpha = std::make_shared<Matrix<T>>(Matrix<T>::Zero(H.rows(), 1));
  Matrix<T> out(static_cast<Eigen::Index>(segs->size()), H.cols());
  for (std::size_t s = 0; s < segs->size(); ++s) {
    const Segment seg = (*segs)[s];
    if (seg.length <= 0 || seg.offset < 0 || seg.offset + seg.length > H.rows())
      throw UsageError("attention pooling over an empty or out-of-range segment");
    auto block = L.middleRows(seg.offset, seg.length);
    const T m = block.maxCoeff();
    Matrix<T> e = (block.array() - m).exp().matrix();
    e /= e.sum();
    alpha->middleRows(seg.offset, seg.length) = e;
    out.row(static_cast<Eigen::Index>(s)) = e.transpose() * H.middleRows(seg.offset, seg.length);
  }
  return h.tape().record(std::move(out), {h, logits}, [h, logits, segs, alpha](Tape<T>& t, int self) {
    const Matrix<T>& H = t.value(h.id());
    const Matrix<T>& G = t.grad(self);
    Matrix<T> dH = Matrix<T>::Zero(H.rows(), H.cols());
    Matrix<T> dL = Matrix<T>::Zero(H.rows(), 1);
    for (std::size_t s = 0; s < segs->size(); ++s) {
      const Segment seg = (*segs)[s];
      const auto si = static_cast<Eigen::Index>(s);
      auto a = alpha->middleRows(seg.offset, seg.length);
      dH.middleRows(seg.offset, seg.length).noalias() = a * G.row(si);
      Matrix<T> da = H.middleRows(seg.offset, seg.length) * G.row(si).transpose();
      const T avg = (a.array() * da.array()).sum();
      dL.middleRows(seg.offset, seg.length) = (a.array() * (da.array() - avg)).matrix();
    }
    if (t.requires_grad(h.id())) t.accumulate(h.id(), dH);
    if (t.requires_grad(logits.id())) t.accumulate(logits.id(), dL);
  });
}

// ---------------------------------------------------------------------------
// Instantiations

#define MCQA_INSTANTIATE(T)                                                                      \
  template class ParameterStore<T>;                                                              \
  template class Var<T>;                                                                         \
  template class Tape<T>;                                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                           \
  template Var<T> sub(Var<T>, Var<T>);                                                           \
  template Var<T> mul(Var<T>, Var<T>);                                                           \
  template Var<T> scale(Var<T>, T);                                                              \
  template Var<T> transpose(Var<T>);                                                             \
  template Var<T> concat(std::span<const Var<T>>, int);                                          \
  template Var<T> slice_rows(Var<T>, Eigen::Index, Eigen::Index);                                \
  template Var<T> slice_cols(Var<T>, Eigen::Index, Eigen::Index);                                \
  template Var<T> element(Var<T>, Eigen::Index, Eigen::Index);                                   \
  template Var<T> relu(Var<T>);                                                                  \
  template Var<T> tanh(Var<T>);                                                                  \
  template Var<T> sigmoid(Var<T>);                                                               \
  template Var<T> exp(Var<T>);                                                                   \
  template Var<T> log(Var<T>);                                                                   \
  template Var<T> softmax(Var<T>, int);                                                          \
  template Var<T> log_softmax(Var<T>, int);                                                      \
  template Var<T> logsumexp(Var<T>, int);                                                        \
  template Var<T> logsumexp_all(Var<T>);                                                         \
  template Var<T> sum(Var<T>, int);                                                              \
  template Var<T> sum_all(Var<T>);                                                               \
  template Var<T> max(Var<T>, int);                                                              \
  template Var<T> min(Var<T>, int);                                                              \
  template Var<T> mean(Var<T>, int);                                                             \
  template Var<T> stddev(Var<T>, int);                                                           \
  template Var<T> dot(Var<T>, Var<T>);                                                           \
  template Var<T> dropout(Var<T>, double, bool, Rng*);                                           \
  template Var<T> gru(Var<T>, Var<T>, Var<T>, Var<T>, std::span<const Segment>, bool);           \
  template Var<T> segment_attention_pool(Var<T>, Var<T>, std::span<const Segment>);

MCQA_INSTANTIATE(float)
MCQA_INSTANTIATE(double)
MCQA_INSTANTIATE(long double)

#undef MCQA_INSTANTIATE

}  // namespace mcqa
