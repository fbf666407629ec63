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

// Tubelet proposal network: a factorized spatio-temporal backbone (1xkxk
// spatial convolution followed by lx1x1 temporal convolution per stage, with
// spatial-only pooling), sibling regression/actionness heads over anchor
// cuboids, the proposal objective and proposal extraction.

#include <cstdint>
#include <random>
#include <vector>

#include "lstr/geometry.hpp"
#include "lstr/numerics.hpp"
#include "lstr/tensor.hpp"

namespace lstr {

struct BackboneConfig {
  int frames = 8;
  int spatial_kernel = 3;
  int temporal_kernel = 3;
  int in_channels = 3;
  std::vector<int> channels{8, 16, 32};

  int total_stride() const { return 1 << channels.size(); }
  int out_channels() const { return channels.back(); }
};

struct ClipFeature {
  Tensor values;  // T x H' x W' x C
  int stride = 1;

  std::size_t frames() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
  std::size_t channels() const { return values.dim(3); }
};

class Backbone {
 public:
  struct StageCache {
    Tensor input;     // T x H x W x Cin
    Tensor spatial;   // post-activation
    Tensor temporal;  // post-activation
    std::vector<std::uint32_t> pool_argmax;
  };
  struct Cache {
    std::vector<StageCache> stages;
  };

  Backbone() = default;
  Backbone(const BackboneConfig& config, std::mt19937_64& rng);

  const BackboneConfig& config() const { return config_; }

  // clip: T x H x W x in_channels. Throws DimensionError when H or W is not
  // divisible by the total stride.
  ClipFeature forward(const Tensor& clip, Cache* cache) const;
  // Accumulates parameter gradients. Input gradients are not propagated into
  // the clip.
  void backward(const Cache& cache, const Tensor& dfeature);

  ParameterList parameters();

 private:
  struct Stage {
    Parameter spatial_w;   // k x k x Cin x Cout
    Parameter spatial_b;   // Cout
    Parameter temporal_w;  // l x Cout x Cout
    Parameter temporal_b;  // Cout
  };
  BackboneConfig config_;
  std::vector<Stage> stages_;
};

struct TpnOutput {
  Tensor regression;          // anchors x 4T
  Tensor actionness_logits;   // anchors x 2, column 1 = action
};

/// Regression and actionness heads applied per feature cell to the
/// time-flattened T*C vector, producing 4T deltas and 2 logits for each of
/// the cell's anchors.
class TpnHeads {
 public:
  struct Cache {
    Tensor cells;  // (H' * W') x (T * C)
  };

  TpnHeads() = default;
  TpnHeads(int frames, int channels, std::size_t anchors_per_cell, std::mt19937_64& rng);

  TpnOutput forward(const ClipFeature& feature, const AnchorGrid& grid, Cache* cache) const;
  // Returns the gradient w.r.t. the clip feature values.
  Tensor backward(const Cache& cache, const ClipFeature& feature, const Tensor& dregression,
                  const Tensor& dlogits);

  ParameterList parameters();

 private:
  int frames_ = 0;
  int channels_ = 0;
  std::size_t anchors_per_cell_ = 0;
  Parameter reg_w_, reg_b_, cls_w_, cls_b_;
};

struct TpnLoss {
  double value = 0.0;
  double classification = 0.0;
  double regression = 0.0;
  Tensor dregression;
  Tensor dlogits;
};

// (1/N) sum softmax CE over sampled anchors + lambda (1/N_reg) sum over
// sampled positives of smooth L1 on the 4T deltas. N_reg = 0 drops the
// regression term.
TpnLoss tpn_loss(const TpnOutput& out, const AnchorAssignment& assignment,
                 const std::vector<std::size_t>& sampled, double lambda);

// Up to floor(size * pos_fraction) positives, remainder negatives, each drawn
// uniformly without replacement. Returned indices are sorted.
std::vector<std::size_t> sample_minibatch(const AnchorAssignment& assignment, std::size_t size,
                                          double pos_fraction, std::uint64_t seed);

struct ProposalOptions {
  double nms_iou = 0.7;
  std::size_t keep_top = 300;
};

// Decodes every anchor, scores it with the softmax action probability and
// keeps the NMS survivors.
std::vector<Tubelet> propose(const TpnOutput& out, const AnchorGrid& grid,
                             const ProposalOptions& options);

}  // namespace lstr
