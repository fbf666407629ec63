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

// Human-context relation inside one clip. For each tubelet: 3D RoI pooling
// to a T x 7 x 7 x C human block, an adaptive T x 3 x 3 kernel predicted from
// that block, adversarial erasing of the tubelet's own cells, a sigmoid
// attention map from the kernel convolved over the erased feature, attention
// pooling to a context vector, and fusion [human embedding; context].
//
// The T x 3 x 3 kernel consumes the C-channel feature through a learned,
// shared channel reduction followed by per-frame 3x3 "same" convolution with
// the kernel's frame slice. Attention pooling reads the erased feature.

#include <cstdint>
#include <random>
#include <vector>

#include "lstr/geometry.hpp"
#include "lstr/numerics.hpp"
#include "lstr/tpn.hpp"

namespace lstr {

inline constexpr std::size_t kRoiBins = 7;

struct HumanRepresentation {
  Tensor values;  // T x 7 x 7 x C
};

struct AdaptiveKernel {
  Tensor values;  // T x 3 x 3
};

struct AttentionMap {
  Tensor values;  // T x H' x W', entries in (0, 1)
};

struct FusedTubeletFeature {
  Tensor values;  // [d_h + C]; human embedding first
  std::size_t human_width = 0;
};

// Max-pools each frame's box (projected by the feature stride) over a 7x7 bin
// grid. Boxes smaller than a cell collapse to the nearest cell. When `argmax`
// is given it receives, per output entry, the flat source index into
// feature.values.
HumanRepresentation roi_pool_3d(const ClipFeature& feature, const Tubelet& tubelet,
                                std::vector<std::uint32_t>* argmax = nullptr);
void roi_pool_3d_backward(const std::vector<std::uint32_t>& argmax, const Tensor& dhuman,
                          Tensor& dfeature);

// T x H' x W' mask: 0 where the cell center lies inside that frame's box.
Tensor erase_mask(const ClipFeature& feature, const Tubelet& tubelet);
ClipFeature erase_tubelet(const ClipFeature& feature, const Tubelet& tubelet);

// sum over (t, i, j) of attn[t, i, j] * feature[t, i, j, :]
Tensor attention_pool_3d(const ClipFeature& feature, const AttentionMap& attn);

struct ShortTermConfig {
  int frames = 8;
  int channels = 32;
  int human_width = 32;  // d_h
  // Multiplies the pooled context before fusion. 1 keeps the plain sum.
  double context_scale = 1.0;
  // Multiplies the pooled human block before the kernel and embedding layers.
  double human_scale = 1.0;
};

class ShortTermRelation {
 public:
  struct Cache {
    std::size_t count = 0;
    Tensor human;    // N x (T*49*C)
    Tensor kernels;  // N x (T*9)
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<Tensor> masks;    // T x H' x W'
    std::vector<Tensor> reduced;  // T x H' x W'
    std::vector<Tensor> attention;
  };

  ShortTermRelation() = default;
  ShortTermRelation(const ShortTermConfig& config, std::mt19937_64& rng);

  const ShortTermConfig& config() const { return config_; }
  std::size_t output_width() const {
    return static_cast<std::size_t>(config_.human_width + config_.channels);
  }

  AdaptiveKernel adaptive_kernel(const HumanRepresentation& human) const;
  AttentionMap attention_map(const ClipFeature& erased, const AdaptiveKernel& kernel) const;
  FusedTubeletFeature fuse_features(const HumanRepresentation& human, const Tensor& context) const;

  // Full chain for every tubelet of one clip; returns N x (d_h + C).
  Tensor forward(const ClipFeature& feature, const std::vector<Tubelet>& tubelets, Cache* cache) const;
  FusedTubeletFeature forward_one(const ClipFeature& feature, const Tubelet& tubelet) const;
  // Accumulates parameter gradients and adds the feature gradient into
  // `dfeature` (same shape as feature.values).
  void backward(const Cache& cache, const ClipFeature& feature, const Tensor& dfused, Tensor& dfeature);

  ParameterList parameters();
  Parameter& kernel_weight() { return theta_w_; }
  Parameter& reduction() { return reduce_u_; }

 private:
  std::size_t human_size() const {
    return static_cast<std::size_t>(config_.frames) * kRoiBins * kRoiBins *
           static_cast<std::size_t>(config_.channels);
  }
  // Channel-reduced erased feature, T x H' x W'.
  Tensor reduce_channels(const ClipFeature& erased) const;

  ShortTermConfig config_;
  Parameter theta_w_;   // (T*49*C) x (T*9)
  Parameter theta_b_;   // T*9
  Parameter reduce_u_;  // C
  Parameter fuse_w_;    // (T*49*C) x d_h
  Parameter fuse_b_;    // d_h
};

}  // namespace lstr
