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

#include "lstr/model.hpp"

#include <algorithm>

#include "lstr/error.hpp"

namespace lstr {

struct LstrModel::ClipPass {
  Backbone::Cache backbone;
  ClipFeature feature;
  TpnHeads::Cache heads;
  TpnOutput out;
  TpnLoss loss;
  std::vector<int> labels;  // -1 for background
  ShortTermRelation::Cache short_term;
  Tensor fused;
};

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

// Leading `width` columns of a row matrix.
Tensor leading_columns(const Tensor& m, std::size_t width) {
  if (m.empty()) return Tensor();
  const std::size_t n = m.dim(0), d = m.dim(1);
  Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i) std::copy(m.raw() + i * d, m.raw() + i * d + width, out.raw() + i * width);
  return out;
}

void append(ParameterList& to, const ParameterList& from) { to.insert(to.end(), from.begin(), from.end()); }

}  // namespace

LstrModel::LstrModel(const RunConfig& config, std::uint64_t seed)
    : config_(config), relation_(config.model.relation), grid_(config.anchor_grid()) {
  config_.validate();
  anchors_ = generate_anchors(grid_);
  std::mt19937_64 rng(seed);
  backbone_ = Backbone(config_.backbone(), rng);
  heads_ = TpnHeads(config_.data.clip_length, config_.model.channels.back(), grid_.anchors_per_cell(), rng);
  str_ = ShortTermRelation(config_.short_term(), rng);
  ltr_ = LongTermRelation(str_.output_width(), config_.model.gamma, rng);
  classifier_ = ActionClassifier(classifier_width(), static_cast<std::size_t>(config_.data.synth.num_classes),
                                 config_.model.label_mode, config_.model.dropout, rng);
}

ParameterList LstrModel::tpn_parameters() {
  ParameterList p = backbone_.parameters();
  append(p, heads_.parameters());
  return p;
}

ParameterList LstrModel::relation_parameters() {
  ParameterList p = str_.parameters();
  append(p, ltr_.parameters());
  append(p, classifier_.parameters());
  return p;
}

ParameterList LstrModel::parameters() {
  ParameterList p = tpn_parameters();
  append(p, relation_parameters());
  return p;
}

Tensor LstrModel::preprocess(const Tensor& frames) {
  Tensor out = frames;
  for (double& v : out.values()) v -= 0.5;
  return out;
}

std::size_t LstrModel::relation_width() const {
  return relation_ == RelationMode::kTpnOnly ? static_cast<std::size_t>(config_.model.human_width)
                                             : str_.output_width();
}

std::size_t LstrModel::classifier_width() const { return relation_width(); }

Tensor LstrModel::classifier_input(const std::vector<ClipTubelets>& clips, int m, TemporalWindow* window,
                                   LongTermRelation::Cache* cache) const {
  const ClipTubelets& center = clips[static_cast<std::size_t>(m)];
  if (relation_ != RelationMode::kFull) return center.features;
  *window = build_window(clips, m, config_.model.window_radius, relation_width());
  return ltr_.forward(*window, cache);
}

double LstrModel::tpn_step(const Clip& clip, std::uint64_t seed) {
  Backbone::Cache bc;
  const ClipFeature feature = backbone_.forward(preprocess(clip.frames), &bc);
  TpnHeads::Cache hc;
  const TpnOutput out = heads_.forward(feature, grid_, &hc);
  const AnchorAssignment assignment = assign_labels(anchors_, clip.gt);
  const auto sampled = sample_minibatch(assignment, static_cast<std::size_t>(config_.tpn.minibatch),
                                        config_.tpn.positive_fraction, seed);
  const TpnLoss loss = tpn_loss(out, assignment, sampled, config_.tpn.lambda);
  const Tensor dfeature = heads_.backward(hc, feature, loss.dregression, loss.dlogits);
  backbone_.backward(bc, dfeature);
  return loss.value;
}

VideoLoss LstrModel::video_step(const VideoClips& video, std::uint64_t seed, bool update_tpn) {
  const std::size_t m_count = video.clips.size();
  const std::size_t dh = static_cast<std::size_t>(config_.model.human_width);
  const std::size_t width = relation_width();
  const std::size_t classes = classifier_.classes();
  VideoLoss result;

  std::vector<ClipPass> passes(m_count);
  std::vector<ClipTubelets> clips(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const Clip& clip = video.clips[m];
    ClipPass& p = passes[m];
    p.feature = backbone_.forward(preprocess(clip.frames), update_tpn ? &p.backbone : nullptr);
    p.out = heads_.forward(p.feature, grid_, update_tpn ? &p.heads : nullptr);
    if (update_tpn) {
      const AnchorAssignment assignment = assign_labels(anchors_, clip.gt);
      const auto sampled = sample_minibatch(assignment, static_cast<std::size_t>(config_.tpn.minibatch),
                                            config_.tpn.positive_fraction, mix(seed, m));
      p.loss = tpn_loss(p.out, assignment, sampled, config_.tpn.lambda);
      result.tpn += p.loss.value;
    }

    // Ground-truth tubelets join the proposals so every actor is represented.
    std::vector<Tubelet> tubelets = clip.gt;
    const auto proposals = propose(p.out, grid_, config_.proposals(config_.train.relation_proposals));
    tubelets.insert(tubelets.end(), proposals.begin(), proposals.end());
    for (Tubelet& t : tubelets) t.clip_index = clip.clip_index;
    for (const Tubelet& t : tubelets) {
      int label = -1;
      double best = 0.0;
      for (std::size_t g = 0; g < clip.gt.size(); ++g) {
        const double iou = tubelet_iou(t, clip.gt[g]);
        if (iou >= config_.train.foreground_iou && iou > best) {
          best = iou;
          label = clip.gt_labels[g];
        }
      }
      p.labels.push_back(label);
    }
    p.fused = str_.forward(p.feature, tubelets, &p.short_term);
    clips[m].features = relation_ == RelationMode::kTpnOnly ? leading_columns(p.fused, dh) : p.fused;
    clips[m].tubelets = std::move(tubelets);
  }

  // Gradients w.r.t. the per-clip relation features.
  std::vector<Tensor> dfeatures(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    if (!clips[m].tubelets.empty()) dfeatures[m] = Tensor({clips[m].tubelets.size(), width});
  }

  for (std::size_t m = 0; m < m_count; ++m) {
    const auto& labels = passes[m].labels;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= 0) rows.push_back(i);
    }
    if (rows.empty()) continue;
    TemporalWindow window;
    LongTermRelation::Cache lcache;
    const Tensor input = classifier_input(clips, static_cast<int>(m), &window, &lcache);
    ActionClassifier::Cache ccache;
    const Tensor full_logits = classifier_.logits(input, true, mix(seed, 1000 + m), &ccache);
    Tensor logits({rows.size(), classes});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy(full_logits.raw() + rows[r] * classes, full_logits.raw() + (rows[r] + 1) * classes,
                logits.raw() + r * classes);
    }
    LossResult loss;
    if (config_.model.label_mode == LabelMode::kSingleLabel) {
      std::vector<int> targets;
      for (std::size_t r : rows) targets.push_back(labels[r]);
      loss = classification_loss(logits, targets);
    } else {
      Tensor targets({rows.size(), classes});
      for (std::size_t r = 0; r < rows.size(); ++r) targets(r, labels[rows[r]]) = 1.0;
      loss = classification_loss(logits, targets);
    }
    result.classification += loss.value;
    result.labeled_tubelets += rows.size();

    Tensor dlogits(full_logits.shape());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy(loss.grad.raw() + r * classes, loss.grad.raw() + (r + 1) * classes,
                dlogits.raw() + rows[r] * classes);
    }
    const Tensor dinput = classifier_.backward(ccache, dlogits);
    if (relation_ == RelationMode::kFull) {
      const Tensor dx = ltr_.backward(lcache, window, dinput);
      for (std::size_t r = 0; r < window.size(); ++r) {
        const WindowMember& mem = window.members[r];
        if (mem.padding) continue;
        Tensor& dst = dfeatures[static_cast<std::size_t>(mem.clip_index)];
        for (std::size_t j = 0; j < width; ++j) dst(mem.tubelet_index, j) += dx(r, j);
      }
    } else {
      dfeatures[m].add(dinput);
    }
  }

  for (std::size_t m = 0; m < m_count; ++m) {
    ClipPass& p = passes[m];
    Tensor dfeature = Tensor::zeros_like(p.feature.values);
    if (!clips[m].tubelets.empty()) {
      Tensor dfused = Tensor::zeros_like(p.fused);
      const std::size_t n = dfused.dim(0), d = dfused.dim(1);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(dfeatures[m].raw() + i * width, dfeatures[m].raw() + (i + 1) * width, dfused.raw() + i * d);
      }
      str_.backward(p.short_term, p.feature, dfused, dfeature);
    }
    if (update_tpn) {
      dfeature.add(heads_.backward(p.heads, p.feature, p.loss.dregression, p.loss.dlogits));
      backbone_.backward(p.backbone, dfeature);
    }
  }
  return result;
}

VideoAnalysis LstrModel::analyze(const VideoClips& video, int proposal_cap) const {
  const std::size_t m_count = video.clips.size();
  const std::size_t dh = static_cast<std::size_t>(config_.model.human_width);
  VideoAnalysis va;
  va.clips.resize(m_count);
  std::vector<ClipTubelets> clips(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    ClipAnalysis& ca = va.clips[m];
    ca.feature = backbone_.forward(preprocess(video.clips[m].frames), nullptr);
    const TpnOutput out = heads_.forward(ca.feature, grid_, nullptr);
    ca.tubelets = propose(out, grid_, config_.proposals(proposal_cap));
    for (Tubelet& t : ca.tubelets) t.clip_index = video.clips[m].clip_index;
    ca.fused = str_.forward(ca.feature, ca.tubelets, &ca.short_term);
    clips[m].tubelets = ca.tubelets;
    clips[m].features = relation_ == RelationMode::kTpnOnly ? leading_columns(ca.fused, dh) : ca.fused;
  }
  va.windows.resize(m_count);
  va.graphs.resize(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    ClipAnalysis& ca = va.clips[m];
    if (ca.tubelets.empty()) continue;
    LongTermRelation::Cache lcache;
    const Tensor input = classifier_input(clips, static_cast<int>(m), &va.windows[m], &lcache);
    if (relation_ == RelationMode::kFull) va.graphs[m] = lcache.graph;
    const Tensor scores = classifier_.classify(input, false, 0);
    for (std::size_t i = 0; i < ca.tubelets.size(); ++i) {
      Tubelet& t = ca.tubelets[i];
      t.class_scores.resize(scores.dim(1));
      for (std::size_t k = 0; k < scores.dim(1); ++k) t.class_scores[k] = t.actionness * scores(i, k);
    }
  }
  return va;
}

}  // namespace lstr
