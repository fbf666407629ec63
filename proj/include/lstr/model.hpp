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

// The assembled detector: backbone and proposal heads, short-term relation,
// long-term relation and the action classifier, with per-video training and
// inference passes.
//
// Relation modes select the classifier input: kTpnOnly uses the human
// embedding f^h alone, kShortTerm the fused [f^h; context] vector, kFull the
// graph-convolved window features.

#include <cstdint>
#include <random>
#include <vector>

#include "lstr/clip_io.hpp"
#include "lstr/config.hpp"
#include "lstr/long_term.hpp"
#include "lstr/short_term.hpp"
#include "lstr/tpn.hpp"

namespace lstr {

struct VideoLoss {
  double tpn = 0.0;
  double classification = 0.0;
  std::size_t labeled_tubelets = 0;
};

// Per-clip inference state.
struct ClipAnalysis {
  ClipFeature feature;
  std::vector<Tubelet> tubelets;  // proposals; class_scores = actionness * p(class)
  Tensor fused;                   // N x (d_h + C)
  ShortTermRelation::Cache short_term;
};

struct VideoAnalysis {
  std::vector<ClipAnalysis> clips;
  // One entry per clip. Entries have no members for kTpnOnly / kShortTerm
  // and for clips without proposals.
  std::vector<TemporalWindow> windows;
  std::vector<Tensor> graphs;  // N_m x N
};

class LstrModel {
 public:
  LstrModel(const RunConfig& config, std::uint64_t seed);

  const RunConfig& config() const { return config_; }
  RelationMode relation() const { return relation_; }

  ParameterList parameters();
  ParameterList tpn_parameters();
  ParameterList relation_parameters();

  // Centers pixel values around zero.
  static Tensor preprocess(const Tensor& frames);

  // Proposal objective for one clip; accumulates gradients into the backbone
  // and heads.
  double tpn_step(const Clip& clip, std::uint64_t seed);

  // Proposal objective on every clip plus the classification loss of every
  // labeled tubelet; accumulates gradients. With update_tpn false the
  // backbone and heads receive no gradient.
  VideoLoss video_step(const VideoClips& video, std::uint64_t seed, bool update_tpn);

  // `proposal_cap` proposals per clip are classified.
  VideoAnalysis analyze(const VideoClips& video, int proposal_cap) const;

  const std::vector<Tubelet>& anchors() const { return anchors_; }
  ShortTermRelation& short_term() { return str_; }
  LongTermRelation& long_term() { return ltr_; }
  ActionClassifier& classifier() { return classifier_; }

 private:
  struct ClipPass;

  std::size_t relation_width() const;
  std::size_t classifier_width() const;
  // Classifier input rows for the center clip `m` given per-clip features.
  Tensor classifier_input(const std::vector<ClipTubelets>& clips, int m, TemporalWindow* window,
                          LongTermRelation::Cache* cache) const;

  RunConfig config_;
  RelationMode relation_;
  AnchorGrid grid_;
  std::vector<Tubelet> anchors_;
  Backbone backbone_;
  TpnHeads heads_;
  ShortTermRelation str_;
  LongTermRelation ltr_;
  ActionClassifier classifier_;
};

}  // namespace lstr
