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

#include "lstr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lstr/error.hpp"
#include "lstr/simd.hpp"

namespace lstr {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* context) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(context) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  simd::gemm_nn(m, n, k, a.raw(), b.raw(), c.raw());
  return c;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (dc.shape() != Shape{m, n}) throw DimensionError("matmul_backward: upstream shape");
  MatmulGrads g{Tensor({m, k}), Tensor({k, n})};
  simd::gemm_nt(m, k, n, dc.raw(), b.raw(), g.da.raw());
  simd::gemm_tn(k, n, m, a.raw(), dc.raw(), g.db.raw());
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "sigmoid_backward");
  Tensor dx = Tensor::zeros_like(y);
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.raw() + r * cols;
    double* out = y.raw() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      z += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= z;
  }
  return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_rows_backward");
  const std::size_t rows = y.dim(0), cols = y.dim(1);
  Tensor dx({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y.raw() + r * cols;
    const double* gr = dy.raw() + r * cols;
    double inner = 0.0;
    for (std::size_t c = 0; c < cols; ++c) inner += yr[c] * gr[c];
    for (std::size_t c = 0; c < cols; ++c) dx.raw()[r * cols + c] = yr[c] * (gr[c] - inner);
  }
  return dx;
}

Tensor conv2d_same(const Tensor& frame, const Tensor& kernel) {
  require_rank(frame, 2, "conv2d_same");
  if (kernel.shape() != Shape{3, 3}) {
    throw DimensionError("conv2d_same: kernel must be 3x3, got " + shape_string(kernel.shape()));
  }
  const long h = static_cast<long>(frame.dim(0)), w = static_cast<long>(frame.dim(1));
  Tensor out({frame.dim(0), frame.dim(1)});
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long dy = -1; dy <= 1; ++dy) {
        const long yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (long dx = -1; dx <= 1; ++dx) {
          const long xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          acc += kernel(dy + 1, dx + 1) * frame(yy, xx);
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

Conv2dGrads conv2d_same_backward(const Tensor& frame, const Tensor& kernel, const Tensor& dout) {
  require_same_shape(frame, dout, "conv2d_same_backward");
  const long h = static_cast<long>(frame.dim(0)), w = static_cast<long>(frame.dim(1));
  Conv2dGrads g{Tensor::zeros_like(frame), Tensor({3, 3})};
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const double go = dout(y, x);
      if (go == 0.0) continue;
      for (long dy = -1; dy <= 1; ++dy) {
        const long yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (long dx = -1; dx <= 1; ++dx) {
          const long xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          g.dkernel(dy + 1, dx + 1) += go * frame(yy, xx);
          g.dframe(yy, xx) += go * kernel(dy + 1, dx + 1);
        }
      }
    }
  }
  return g;
}

LossResult smooth_l1(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "smooth_l1");
  LossResult r{0.0, Tensor::zeros_like(pred)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double x = pred[i] - target[i];
    if (std::abs(x) < 1.0) {
      r.value += 0.5 * x * x;
      r.grad[i] = x;
    } else {
      r.value += std::abs(x) - 0.5;
      r.grad[i] = x > 0.0 ? 1.0 : -1.0;
    }
  }
  return r;
}

namespace {

LossResult softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (k < 2) throw DimensionError("classification_loss: softmax mode needs K >= 2");
  if (labels.size() != n) throw DimensionError("classification_loss: label count != rows");
  Tensor prob = softmax_rows(logits);
  LossResult r{0.0, prob};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("classification_loss: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(k) + ")");
    }
    // log-sum-exp form keeps the loss finite for saturated logits.
    const double* row = logits.raw() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
    r.value += (std::log(z) + mx) - row[y];
    r.grad(i, static_cast<std::size_t>(y)) -= 1.0;
  }
  r.value /= static_cast<double>(n);
  r.grad.scale(1.0 / static_cast<double>(n));
  return r;
}

// softplus(x) = log(1 + e^x), stable on both tails.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

LossResult sigmoid_ce(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "classification_loss");
  LossResult r{0.0, Tensor::zeros_like(logits)};
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], y = targets[i];
    if (y != 0.0 && y != 1.0) throw std::out_of_range("classification_loss: binary target expected");
    r.value += y * softplus(-x) + (1.0 - y) * softplus(x);
    r.grad[i] = (sigmoid(x) - y) * inv;
  }
  r.value *= inv;
  return r;
}

}  // namespace

LossResult classification_loss(const Tensor& logits, const ClassTargets& targets) {
  require_rank(logits, 2, "classification_loss");
  if (const auto* idx = std::get_if<std::vector<int>>(&targets)) return softmax_ce(logits, *idx);
  return sigmoid_ce(logits, std::get<Tensor>(targets));
}

Tensor random_normal(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Parameter::Parameter(std::string n, Tensor init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Tensor::zeros_like(value)),
      momentum(Tensor::zeros_like(value)) {}

void zero_grads(const ParameterList& params) {
  for (Parameter* p : params) p->zero_grad();
}

double LrSchedule::lr(double epoch) const {
  if (epoch < 0.0 || std::isnan(epoch)) throw std::invalid_argument("lr: negative epoch progress");
  const double total = static_cast<double>(total_epochs);
  if (epoch < warmup_epochs) {
    return warmup_start_lr + (base_lr - warmup_start_lr) * epoch / warmup_epochs;
  }
  if (epoch >= total || total <= warmup_epochs) return epoch >= total ? 0.0 : base_lr;
  const double progress = (epoch - warmup_epochs) / (total - warmup_epochs);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

double sgd_step(const ParameterList& params, const LrSchedule& schedule, double epoch_progress,
                const SgdOptions& options) {
  const double lr = schedule.lr(epoch_progress);
  for (Parameter* p : params) {
    double* w = p->value.raw();
    const double* g = p->grad.raw();
    double* v = p->momentum.raw();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = options.momentum * v[i] + lr * (g[i] + options.weight_decay * w[i]);
      w[i] -= v[i];
    }
    p->value.require_finite("sgd_step(" + p->name + ")");
  }
  return lr;
}

GradCheckReport finite_diff_check(const ParameterList& params, const ObjectiveFn& objective,
                                  double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  auto eval = [&](bool grads) {
    const double v = objective(grads);
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite objective");
    return v;
  };
  zero_grads(params);
  eval(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = eval(false);
      p.value[i] = saved - eps;
      const double down = eval(false);
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / (std::max(std::abs(a), std::abs(numeric)) + 1e-8);
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace lstr
