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

// Cross-clip relation reasoning: tubelets from the clips within radius w of
// a center clip form a window; edges from the center clip's tubelets to every
// window member score feature similarity after an affine transform plus
// gamma-weighted tubelet overlap; rows are softmax-normalized and a single
// graph convolution Z = G X W produces the relation-aware features that feed
// the action classifier.

#include <cstdint>
#include <random>
#include <vector>

#include "lstr/geometry.hpp"
#include "lstr/numerics.hpp"

namespace lstr {

// Tubelets of one clip with their short-term features (rows).
struct ClipTubelets {
  std::vector<Tubelet> tubelets;
  Tensor features;  // N_m x d, empty when there are no tubelets
};

struct WindowMember {
  int clip_offset = 0;   // relative to the center clip, in [-w, w]
  int clip_index = 0;    // absolute; may lie outside the video for padding
  int tubelet_index = -1;
  bool padding = false;
};

struct TemporalWindow {
  int center_clip = 0;
  int radius = 0;
  std::vector<WindowMember> members;  // N
  std::vector<Tubelet> tubelets;      // N; padding entries carry no boxes
  Tensor features;                    // N x d
  std::size_t center_begin = 0;       // rows of the center clip inside X
  std::size_t center_count = 0;

  std::size_t size() const { return members.size(); }
  std::size_t padding_count() const;
};

struct RelationGraph {
  Tensor weights;  // N_m x N, rows sum to 1
};

// Out-of-range clip slots contribute one zero-feature placeholder each.
TemporalWindow build_window(const std::vector<ClipTubelets>& clips, int center, int radius,
                            std::size_t feature_width);

// Overlap between members compared frame by frame; zero for padding.
double member_iou(const TemporalWindow& window, std::size_t i, std::size_t j);

RelationGraph normalize_graph(const Tensor& scores);

class LongTermRelation {
 public:
  struct Cache {
    Tensor phi;     // N x d
    Tensor graph;   // N_m x N
    Tensor gx;      // N_m x d (G X)
  };

  LongTermRelation() = default;
  LongTermRelation(std::size_t width, double gamma, std::mt19937_64& rng);

  std::size_t width() const { return width_; }
  double gamma() const { return gamma_; }

  // e_ij = phi(f_i)^T phi(f_j) + gamma * iou(h_i, h_j), phi(f) = w f + b.
  Tensor edge_scores(const TemporalWindow& window) const;
  Tensor gcn_forward(const RelationGraph& graph, const TemporalWindow& window) const;

  // edge_scores -> normalize_graph -> gcn_forward.
  Tensor forward(const TemporalWindow& window, Cache* cache) const;
  // Accumulates parameter gradients; returns dL/dX (N x d).
  Tensor backward(const Cache& cache, const TemporalWindow& window, const Tensor& dz);

  ParameterList parameters();
  Parameter& phi_weight() { return phi_w_; }
  Parameter& phi_bias() { return phi_b_; }
  Parameter& gcn_weight() { return gcn_w_; }

 private:
  Tensor transform(const Tensor& x) const;

  std::size_t width_ = 0;
  double gamma_ = 1.0;
  Parameter phi_w_;  // d x d
  Parameter phi_b_;  // d
  Parameter gcn_w_;  // d x d
};

enum class LabelMode { kSingleLabel, kMultiLabel };

/// Dropout (inverted scaling, training only) -> affine -> softmax rows or
/// elementwise sigmoid.
class ActionClassifier {
 public:
  struct Cache {
    Tensor input;  // post-dropout
    Tensor mask;   // empty when dropout inactive
  };

  ActionClassifier() = default;
  ActionClassifier(std::size_t width, std::size_t classes, LabelMode mode, double dropout,
                   std::mt19937_64& rng);

  std::size_t classes() const { return weight_.value.dim(1); }
  LabelMode mode() const { return mode_; }
  double dropout() const { return dropout_; }

  Tensor logits(const Tensor& z, bool training, std::uint64_t seed, Cache* cache) const;
  Tensor scores(const Tensor& logits) const;
  Tensor classify(const Tensor& z, bool training, std::uint64_t seed) const {
    return scores(logits(z, training, seed, nullptr));
  }
  Tensor backward(const Cache& cache, const Tensor& dlogits);

  ParameterList parameters() { return {&weight_, &bias_}; }

 private:
  LabelMode mode_ = LabelMode::kSingleLabel;
  double dropout_ = 0.5;
  Parameter weight_;  // d x K
  Parameter bias_;    // K
};

}  // namespace lstr
