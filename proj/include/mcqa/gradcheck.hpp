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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mcqa/autodiff.hpp"

namespace mcqa {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
///   (f(theta + eps e) - f(theta - eps e)) / (2 eps)
/// for every coordinate of every parameter in `params`, reporting
///   max |a - b| / max(1e-8, |a| + |b|).
/// `loss_fn` must be deterministic and return a 1 x 1 Var built on the given
/// tape from `params`. Parameter gradients are left zeroed.
template <typename T>
GradCheckResult finite_difference_check(ParameterStore<T>& params,
                                        const std::function<Var<T>(Tape<T>&)>& loss_fn, double epsilon = 1e-3) {
  params.zero_grad();
  {
    Tape<T> tape;
    tape.backward(loss_fn(tape));
  }
  auto eval = [&] {
    Tape<T> tape;
    return static_cast<double>(loss_fn(tape).scalar());
  };
  GradCheckResult result;
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      T& theta = p.value.data()[i];
      const T saved = theta;
      theta = static_cast<T>(saved + epsilon);
      const double up = eval();
      theta = static_cast<T>(saved - epsilon);
      const double down = eval();
      theta = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = static_cast<double>(p.grad.data()[i]);
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++result.coordinates;
      if (rel > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(result.max_relative_error, rel);
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

/// Same report, but the central differences are taken on a long double copy
/// of `params` so rounding in the loss cannot swamp small or structurally
/// zero gradients. `loss_fn(tape, store)` must be callable for both
/// ParameterStore<T> and ParameterStore<long double>.
template <typename T, typename LossFn>
GradCheckResult finite_difference_check_extended(ParameterStore<T>& params, LossFn&& loss_fn,
                                                 double epsilon = 1e-5) {
  using Ext = long double;
  params.zero_grad();
  {
    Tape<T> tape;
    tape.backward(loss_fn(tape, params));
  }
  ParameterStore<Ext> ext;
  for (const auto& p : params) ext.add(p.name, p.value.template cast<Ext>());
  auto eval = [&] {
    Tape<Ext> tape;
    return loss_fn(tape, ext).scalar();
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = ext[k];
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      Ext& theta = p.value.data()[i];
      const Ext saved = theta;
      theta = saved + static_cast<Ext>(epsilon);
      const Ext up = eval();
      theta = saved - static_cast<Ext>(epsilon);
      const Ext down = eval();
      theta = saved;
      const double numeric = static_cast<double>((up - down) / (2 * static_cast<Ext>(epsilon)));
      const double analytic = static_cast<double>(params[k].grad.data()[i]);
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++result.coordinates;
      if (rel > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(result.max_relative_error, rel);
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace mcqa
