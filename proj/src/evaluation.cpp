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

#include "lstr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lstr/error.hpp"

namespace lstr {

double average_precision(const std::vector<std::pair<double, bool>>& scored, std::size_t num_gt) {
  if (num_gt == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].first > scored[b].first; });
  const std::size_t n = order.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (scored[order[i]].second) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  // Precision envelope, then area under the step curve.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

double spatio_temporal_iou(const VideoTube& a, const VideoTube& b) {
  std::size_t frames = 0;
  double acc = 0.0;
  auto ia = a.boxes.begin();
  auto ib = b.boxes.begin();
  while (ia != a.boxes.end() || ib != b.boxes.end()) {
    ++frames;
    if (ib == b.boxes.end() || (ia != a.boxes.end() && ia->first < ib->first)) {
      ++ia;
    } else if (ia == a.boxes.end() || ib->first < ia->first) {
      ++ib;
    } else {
      acc += box_iou(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return frames == 0 ? 0.0 : acc / static_cast<double>(frames);
}

namespace {

void check_config(const EvalConfig& cfg) {
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold < 1.0)) {
    throw std::invalid_argument("evaluation: IoU threshold must lie in (0, 1)");
  }
}

// Generic greedy matcher. `group` keys restrict which ground truths a
// detection may match; `overlap` scores a (detection, gt) pair.
template <typename Det, typename Gt, typename KeyFn, typename OverlapFn>
ApResult evaluate(const std::vector<Det>& dets, const std::vector<Gt>& gts, std::size_t num_classes,
                  double threshold, KeyFn key, OverlapFn overlap) {
  ApResult r;
  r.ap.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
  r.gt_count.assign(num_classes, 0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::multimap<decltype(key(gts.front())), std::size_t> by_key;
    std::vector<bool> matched(gts.size(), false);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].label == static_cast<int>(k)) {
        by_key.emplace(key(gts[g]), g);
        ++r.gt_count[k];
      }
    }
    std::vector<std::size_t> order;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].label == static_cast<int>(k)) order.push_back(d);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<std::pair<double, bool>> scored;
    for (std::size_t d : order) {
      double best = -1.0;
      std::size_t best_g = 0;
      auto [lo, hi] = by_key.equal_range(key(dets[d]));
      for (auto it = lo; it != hi; ++it) {
        if (matched[it->second]) continue;
        const double o = overlap(dets[d], gts[it->second]);
        if (o > best) {
          best = o;
          best_g = it->second;
        }
      }
      const bool tp = best > threshold;
      if (tp) matched[best_g] = true;
      scored.emplace_back(dets[d].score, tp);
    }
    if (r.gt_count[k] > 0) r.ap[k] = average_precision(scored, r.gt_count[k]);
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (r.gt_count[k] > 0) {
      sum += r.ap[k];
      ++counted;
    }
  }
  r.mean = counted ? sum / static_cast<double>(counted) : 0.0;
  return r;
}

}  // namespace

ApResult video_map(const std::vector<VideoTube>& detections, const std::vector<VideoTube>& gts,
                   std::size_t num_classes, const EvalConfig& cfg) {
  check_config(cfg);
  if (gts.empty()) {
    return ApResult{std::vector<double>(num_classes, std::numeric_limits<double>::quiet_NaN()),
                    std::vector<std::size_t>(num_classes, 0), 0.0};
  }
  return evaluate(detections, gts, num_classes, cfg.iou_threshold,
                  [](const VideoTube& t) { return t.video; },
                  [](const VideoTube& a, const VideoTube& b) { return spatio_temporal_iou(a, b); });
}

ApResult frame_map(const std::vector<FrameDetection>& detections, const std::vector<FrameDetection>& gts,
                   std::size_t num_classes, const EvalConfig& cfg) {
  check_config(cfg);
  if (gts.empty()) {
    return ApResult{std::vector<double>(num_classes, std::numeric_limits<double>::quiet_NaN()),
                    std::vector<std::size_t>(num_classes, 0), 0.0};
  }
  return evaluate(detections, gts, num_classes, cfg.iou_threshold,
                  [](const FrameDetection& d) { return std::make_pair(d.video, d.frame); },
                  [](const FrameDetection& a, const FrameDetection& b) { return box_iou(a.box, b.box); });
}

Tensor late_fuse(const Tensor& scores_a, const Tensor& scores_b) {
  require_same_shape(scores_a, scores_b, "late_fuse");
  Tensor out = scores_a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (scores_a[i] + scores_b[i]);
  return out;
}

}  // namespace lstr
