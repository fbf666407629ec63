/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Forward/backward primitives, parameters, the SGD optimizer and the
// central-difference gradient checker. Backward passes are written by hand
// per operation and return gradients with respect to their inputs.

#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "lstr/tensor.hpp"

namespace lstr {

// ---- Dense linear algebra -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor da;
  Tensor db;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc);

// ---- Elementwise / row-wise nonlinearities --------------------------------

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
// Gradient w.r.t. the input given the forward output y and upstream dy.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

// Max-subtracted softmax over the last axis of a rank-2 tensor.
Tensor softmax_rows(const Tensor& x);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

// ---- Convolution -----------------------------------------------------------

// 2D cross-correlation of an HxW frame with a 3x3 kernel, zero padded so the
// output is HxW.
Tensor conv2d_same(const Tensor& frame, const Tensor& kernel);

struct Conv2dGrads {
  Tensor dframe;
  Tensor dkernel;
};
Conv2dGrads conv2d_same_backward(const Tensor& frame, const Tensor& kernel, const Tensor& dout);

// ---- Losses ----------------------------------------------------------------

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d first argument
};

// Sum over elements of 0.5 x^2 (|x| < 1) or |x| - 0.5, x = pred - target.
LossResult smooth_l1(const Tensor& pred, const Tensor& target);

// Single-label: one class index per row, mean softmax cross-entropy over rows.
// Multi-label: n x K binary targets, mean sigmoid cross-entropy over entries.
using ClassTargets = std::variant<std::vector<int>, Tensor>;
LossResult classification_loss(const Tensor& logits, const ClassTargets& targets);

// ---- Parameters and optimization ------------------------------------------

// Gaussian initialization; reproducible for a given engine state.
Tensor random_normal(const Shape& shape, double stddev, std::mt19937_64& rng);

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor init);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor momentum;

  void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);

/// Linear warm-up from warmup_start_lr to base_lr over warmup_epochs, then
/// cosine decay reaching zero at total_epochs.
struct LrSchedule {
  double base_lr = 0.001;
  double warmup_start_lr = 0.0001;
  double warmup_epochs = 0.3;
  int total_epochs = 10;

  // Throws std::invalid_argument for negative epoch.
  double lr(double epoch) const;
};

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 0.0001;
};

// One momentum-SGD update (v <- mu v + lr (g + wd w); w <- w - v). Returns
// the learning rate used.
double sgd_step(const ParameterList& params, const LrSchedule& schedule, double epoch_progress,
                const SgdOptions& options = {});

// ---- Gradient verification --------------------------------------------------

// Evaluates the scalar objective. When the flag is set the callee must also
// accumulate analytic gradients into the parameters' grad tensors.
using ObjectiveFn = std::function<double(bool accumulate_gradients)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Compares analytic gradients against central differences for every
// coordinate of every parameter. Relative error is |a - n| / (max(|a|, |n|)
// + 1e-8). Throws NumericError on a non-finite objective.
GradCheckReport finite_diff_check(const ParameterList& params, const ObjectiveFn& objective,
                                  double eps);

}  // namespace lstr
