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

#include "lstr/long_term.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lstr/error.hpp"
#include "lstr/simd.hpp"

namespace lstr {

std::size_t TemporalWindow::padding_count() const {
  return static_cast<std::size_t>(
      std::count_if(members.begin(), members.end(), [](const WindowMember& m) { return m.padding; }));
}

TemporalWindow build_window(const std::vector<ClipTubelets>& clips, int center, int radius,
                            std::size_t feature_width) {
  if (radius < 0) throw std::invalid_argument("build_window: radius must be >= 0");
  if (center < 0 || center >= static_cast<int>(clips.size())) {
    throw std::out_of_range("build_window: center clip out of range");
  }
  TemporalWindow win;
  win.center_clip = center;
  win.radius = radius;
  std::vector<const double*> rows;
  for (int off = -radius; off <= radius; ++off) {
    const int clip = center + off;
    if (clip < 0 || clip >= static_cast<int>(clips.size())) {
      win.members.push_back({off, clip, -1, true});
      win.tubelets.emplace_back();
      rows.push_back(nullptr);
      continue;
    }
    const ClipTubelets& ct = clips[static_cast<std::size_t>(clip)];
    if (!ct.tubelets.empty() && (ct.features.rank() != 2 || ct.features.dim(0) != ct.tubelets.size() ||
                                 ct.features.dim(1) != feature_width)) {
      throw DimensionError("build_window: clip " + std::to_string(clip) + " features " +
                           shape_string(ct.features.shape()));
    }
    if (off == 0) {
      win.center_begin = win.members.size();
      win.center_count = ct.tubelets.size();
    }
    for (std::size_t i = 0; i < ct.tubelets.size(); ++i) {
      win.members.push_back({off, clip, static_cast<int>(i), false});
      win.tubelets.push_back(ct.tubelets[i]);
      rows.push_back(ct.features.raw() + i * feature_width);
    }
  }
  win.features = Tensor({win.members.size(), feature_width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r]) std::copy(rows[r], rows[r] + feature_width, win.features.raw() + r * feature_width);
  }
  return win;
}

double member_iou(const TemporalWindow& window, std::size_t i, std::size_t j) {
  if (window.members[i].padding || window.members[j].padding) return 0.0;
  return tubelet_iou(window.tubelets[i], window.tubelets[j]);
}

RelationGraph normalize_graph(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("normalize_graph: expected a matrix");
  return RelationGraph{softmax_rows(scores)};
}

LongTermRelation::LongTermRelation(std::size_t width, double gamma, std::mt19937_64& rng)
    : width_(width), gamma_(gamma) {
  const double s = 1.0 / std::sqrt(static_cast<double>(width));
  phi_w_ = Parameter("ltr.phi_w", random_normal({width, width}, 0.1 * s, rng));
  phi_b_ = Parameter("ltr.phi_b", Tensor({width}));
  gcn_w_ = Parameter("ltr.gcn_w", random_normal({width, width}, s, rng));
}

Tensor LongTermRelation::transform(const Tensor& x) const {
  const std::size_t n = x.dim(0);
  Tensor phi({n, width_});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(phi_b_.value.raw(), phi_b_.value.raw() + width_, phi.raw() + i * width_);
  }
  simd::gemm_nt(n, width_, width_, x.raw(), phi_w_.value.raw(), phi.raw());
  return phi;
}

Tensor LongTermRelation::edge_scores(const TemporalWindow& window) const {
  if (window.features.rank() != 2 || window.features.dim(1) != width_) {
    throw DimensionError("edge_scores: member features must be N x " + std::to_string(width_));
  }
  const std::size_t n = window.size(), nm = window.center_count;
  if (nm == 0) throw std::invalid_argument("edge_scores: center clip has no tubelets");
  const Tensor phi = transform(window.features);
  Tensor e({nm, n});
  simd::gemm_nt(nm, n, width_, phi.raw() + window.center_begin * width_, phi.raw(), e.raw());
  if (gamma_ != 0.0) {
    for (std::size_t i = 0; i < nm; ++i) {
      for (std::size_t j = 0; j < n; ++j) e(i, j) += gamma_ * member_iou(window, window.center_begin + i, j);
    }
  }
  return e;
}

Tensor LongTermRelation::gcn_forward(const RelationGraph& graph, const TemporalWindow& window) const {
  if (graph.weights.shape() != Shape{window.center_count, window.size()}) {
    throw DimensionError("gcn_forward: graph " + shape_string(graph.weights.shape()) + " for a window of " +
                         std::to_string(window.size()) + " members with " +
                         std::to_string(window.center_count) + " in the center clip");
  }
  const Tensor gx = matmul(graph.weights, window.features);
  return matmul(gx, gcn_w_.value);
}

Tensor LongTermRelation::forward(const TemporalWindow& window, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.phi = transform(window.features);
  const Tensor scores = edge_scores(window);
  c.graph = normalize_graph(scores).weights;
  c.gx = matmul(c.graph, window.features);
  return matmul(c.gx, gcn_w_.value);
}

Tensor LongTermRelation::backward(const Cache& cache, const TemporalWindow& window, const Tensor& dz) {
  const std::size_t n = window.size(), nm = window.center_count, d = width_;
  if (dz.shape() != Shape{nm, d}) throw DimensionError("long-term backward: upstream shape");
  // Z = (G X) W
  simd::gemm_tn(d, d, nm, cache.gx.raw(), dz.raw(), gcn_w_.grad.raw());
  Tensor dgx({nm, d});
  simd::gemm_nt(nm, d, d, dz.raw(), gcn_w_.value.raw(), dgx.raw());
  // G X
  Tensor dgraph({nm, n});
  simd::gemm_nt(nm, n, d, dgx.raw(), window.features.raw(), dgraph.raw());
  Tensor dx({n, d});
  simd::gemm_tn(n, d, nm, cache.graph.raw(), dgx.raw(), dx.raw());
  // softmax rows
  const Tensor de = softmax_rows_backward(cache.graph, dgraph);
  // e = Phi_m Phi^T (+ constant overlap term)
  Tensor dphi({n, d});
  simd::gemm_tn(n, d, nm, de.raw(), cache.phi.raw() + window.center_begin * d, dphi.raw());
  simd::gemm_nn(nm, d, n, de.raw(), cache.phi.raw(), dphi.raw() + window.center_begin * d);
  // Phi = X w^T + b
  simd::gemm_tn(d, d, n, dphi.raw(), window.features.raw(), phi_w_.grad.raw());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) phi_b_.grad[j] += dphi(i, j);
  }
  simd::gemm_nn(n, d, d, dphi.raw(), phi_w_.value.raw(), dx.raw());
  return dx;
}

ParameterList LongTermRelation::parameters() { return {&phi_w_, &phi_b_, &gcn_w_}; }

ActionClassifier::ActionClassifier(std::size_t width, std::size_t classes, LabelMode mode,
                                   double dropout, std::mt19937_64& rng)
    : mode_(mode), dropout_(dropout) {
  if (classes < 2) throw std::invalid_argument("classifier: need at least 2 classes");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("classifier: dropout in [0, 1)");
  weight_ = Parameter("cls.w", random_normal({width, classes}, 1.0 / std::sqrt(static_cast<double>(width)), rng));
  bias_ = Parameter("cls.b", Tensor({classes}));
}

Tensor ActionClassifier::logits(const Tensor& z, bool training, std::uint64_t seed, Cache* cache) const {
  const std::size_t n = z.dim(0), d = z.dim(1), k = classes();
  if (d != weight_.value.dim(0)) throw DimensionError("classify: feature width mismatch");
  Tensor input = z;
  Tensor mask;
  if (training && dropout_ > 0.0) {
    mask = Tensor(z.shape());
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution keep(1.0 - dropout_);
    const double scale = 1.0 / (1.0 - dropout_);
    for (std::size_t i = 0; i < z.size(); ++i) {
      mask[i] = keep(rng) ? scale : 0.0;
      input[i] *= mask[i];
    }
  }
  Tensor out({n, k});
  for (std::size_t i = 0; i < n; ++i) std::copy(bias_.value.raw(), bias_.value.raw() + k, out.raw() + i * k);
  simd::gemm_nn(n, k, d, input.raw(), weight_.value.raw(), out.raw());
  if (cache) *cache = Cache{std::move(input), std::move(mask)};
  return out;
}

Tensor ActionClassifier::scores(const Tensor& logits) const {
  return mode_ == LabelMode::kSingleLabel ? softmax_rows(logits) : sigmoid(logits);
}

Tensor ActionClassifier::backward(const Cache& cache, const Tensor& dlogits) {
  const std::size_t n = cache.input.dim(0), d = cache.input.dim(1), k = classes();
  simd::gemm_tn(d, k, n, cache.input.raw(), dlogits.raw(), weight_.grad.raw());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) bias_.grad[j] += dlogits(i, j);
  }
  Tensor dz({n, d});
  simd::gemm_nt(n, d, k, dlogits.raw(), weight_.value.raw(), dz.raw());
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= cache.mask[i];
  }
  return dz;
}

}  // namespace lstr
