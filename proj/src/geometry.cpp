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

#include "lstr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lstr/error.hpp"

namespace lstr {
namespace {

// exp() argument cap for width/height deltas; ~ 1000/16 growth.
constexpr double kMaxLogScale = 4.135166556742356;

}  // namespace

std::size_t AnchorAssignment::positive_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), AnchorLabel::kPositive));
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double tubelet_iou(const Tubelet& a, const Tubelet& b) {
  if (a.length() != b.length()) {
    throw DimensionError("tubelet_iou: lengths " + std::to_string(a.length()) + " vs " +
                         std::to_string(b.length()));
  }
  if (a.length() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 0; t < a.length(); ++t) acc += box_iou(a.boxes[t], b.boxes[t]);
  return acc / static_cast<double>(a.length());
}

std::vector<Tubelet> generate_anchors(const AnchorGrid& grid) {
  if (grid.feature_height <= 0 || grid.feature_width <= 0 || grid.stride <= 0 || grid.frames <= 0) {
    throw std::invalid_argument("generate_anchors: non-positive grid dimension");
  }
  std::vector<Tubelet> anchors;
  anchors.reserve(grid.anchor_count());
  for (int i = 0; i < grid.feature_height; ++i) {
    for (int j = 0; j < grid.feature_width; ++j) {
      const double cx = (j + 0.5) * grid.stride;
      const double cy = (i + 0.5) * grid.stride;
      for (double scale : grid.scales) {
        for (double ratio : grid.aspect_ratios) {
          const double w = scale * std::sqrt(ratio);
          const double h = scale / std::sqrt(ratio);
          const Box box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
          Tubelet a;
          a.boxes.assign(static_cast<std::size_t>(grid.frames), box);
          anchors.push_back(std::move(a));
        }
      }
    }
  }
  return anchors;
}

Tensor encode_targets(const Tubelet& anchor, const Tubelet& gt) {
  if (anchor.length() != gt.length()) throw DimensionError("encode_targets: length mismatch");
  const std::size_t frames = anchor.length();
  Tensor out({4 * frames});
  for (std::size_t t = 0; t < frames; ++t) {
    const Box& a = anchor.boxes[t];
    const Box& g = gt.boxes[t];
    if (!(a.width() > 0.0) || !(a.height() > 0.0)) {
      throw std::invalid_argument("encode_targets: degenerate anchor box");
    }
    out[4 * t + 0] = (g.cx() - a.cx()) / a.width();
    out[4 * t + 1] = (g.cy() - a.cy()) / a.height();
    out[4 * t + 2] = std::log(g.width() / a.width());
    out[4 * t + 3] = std::log(g.height() / a.height());
  }
  return out;
}

Tubelet decode_boxes(const Tubelet& anchor, const Tensor& deltas, std::optional<ImageBounds> bounds) {
  const std::size_t frames = anchor.length();
  if (deltas.size() != 4 * frames) throw DimensionError("decode_boxes: expected 4T deltas");
  Tubelet out = anchor;
  for (std::size_t t = 0; t < frames; ++t) {
    const Box& a = anchor.boxes[t];
    const double cx = a.cx() + deltas[4 * t + 0] * a.width();
    const double cy = a.cy() + deltas[4 * t + 1] * a.height();
    const double w = a.width() * std::exp(std::min(deltas[4 * t + 2], kMaxLogScale));
    const double h = a.height() * std::exp(std::min(deltas[4 * t + 3], kMaxLogScale));
    Box b{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    if (bounds) {
      const double bw = bounds->width, bh = bounds->height;
      b.x1 = std::clamp(b.x1, 0.0, bw);
      b.x2 = std::clamp(b.x2, 0.0, bw);
      b.y1 = std::clamp(b.y1, 0.0, bh);
      b.y2 = std::clamp(b.y2, 0.0, bh);
      if (b.x2 - b.x1 < 1.0) {
        b.x1 = std::min(b.x1, bw - 1.0);
        b.x2 = b.x1 + 1.0;
      }
      if (b.y2 - b.y1 < 1.0) {
        b.y1 = std::min(b.y1, bh - 1.0);
        b.y2 = b.y1 + 1.0;
      }
    }
    out.boxes[t] = b;
  }
  return out;
}

AnchorAssignment assign_labels(const std::vector<Tubelet>& anchors,
                               const std::vector<Tubelet>& gts) {
  const std::size_t na = anchors.size(), ng = gts.size();
  AnchorAssignment out;
  out.labels.assign(na, AnchorLabel::kNegative);
  out.matched_gt.assign(na, std::nullopt);
  out.regression_targets.assign(na, Tensor());
  if (ng == 0) return out;

  std::vector<double> iou(na * ng);
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t g = 0; g < ng; ++g) iou[a * ng + g] = tubelet_iou(anchors[a], gts[g]);
  }
  // Rule (a): overlap above 0.5 with any ground truth; matched to the best one.
  for (std::size_t a = 0; a < na; ++a) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < ng; ++g) {
      if (iou[a * ng + g] > iou[a * ng + best]) best = g;
    }
    if (iou[a * ng + best] > 0.5) {
      out.labels[a] = AnchorLabel::kPositive;
      out.matched_gt[a] = best;
    }
  }
  // Rule (b): each ground truth claims its highest-overlap anchor.
  std::vector<bool> claimed(na, false);
  for (std::size_t g = 0; g < ng; ++g) {
    std::optional<std::size_t> best;
    for (std::size_t a = 0; a < na; ++a) {
      if (claimed[a]) continue;
      if (!best || iou[a * ng + g] > iou[*best * ng + g]) best = a;
    }
    if (!best) break;
    claimed[*best] = true;
    out.labels[*best] = AnchorLabel::kPositive;
    out.matched_gt[*best] = g;
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (out.labels[a] == AnchorLabel::kPositive) {
      out.regression_targets[a] = encode_targets(anchors[a], gts[*out.matched_gt[a]]);
    }
  }
  return out;
}

std::vector<std::size_t> nms_indices(const std::vector<Tubelet>& tubelets, double iou_threshold,
                                     std::size_t keep_top) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("nms_tubelets: threshold must be in (0, 1]");
  }
  std::vector<std::size_t> order(tubelets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tubelets[a].actionness > tubelets[b].actionness;
  });
  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    if (keep.size() >= keep_top) break;
    bool suppressed = false;
    for (std::size_t k : keep) {
      if (tubelet_iou(tubelets[idx], tubelets[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(idx);
  }
  return keep;
}

std::vector<Tubelet> nms_tubelets(const std::vector<Tubelet>& tubelets, double iou_threshold,
                                  std::size_t keep_top) {
  std::vector<Tubelet> out;
  for (std::size_t i : nms_indices(tubelets, iou_threshold, keep_top)) out.push_back(tubelets[i]);
  return out;
}

}  // namespace lstr
