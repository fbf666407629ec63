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

// Boxes, tubelets, anchor cuboids, box regression, tubelet NMS and anchor
// label assignment.

#include <cstdint>
#include <optional>
#include <vector>

#include "lstr/tensor.hpp"

namespace lstr {

// Axis-aligned box in continuous pixel coordinates.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  bool operator==(const Box&) const = default;
};

struct Tubelet {
  std::vector<Box> boxes;  // one per frame of the clip
  double actionness = 0.0;
  std::vector<double> class_scores;  // empty until classified
  int clip_index = 0;

  std::size_t length() const { return boxes.size(); }
};

struct AnchorGrid {
  int feature_height = 8;
  int feature_width = 8;
  int stride = 8;
  std::vector<double> scales{8, 16, 32};
  std::vector<double> aspect_ratios{0.5, 1, 2};
  int frames = 8;

  std::size_t anchors_per_cell() const { return scales.size() * aspect_ratios.size(); }
  std::size_t anchor_count() const {
    return static_cast<std::size_t>(feature_height) * static_cast<std::size_t>(feature_width) *
           anchors_per_cell();
  }
  double image_width() const { return static_cast<double>(feature_width * stride); }
  double image_height() const { return static_cast<double>(feature_height * stride); }
};

enum class AnchorLabel : std::uint8_t { kNegative, kPositive, kIgnore };

struct AnchorAssignment {
  std::vector<AnchorLabel> labels;
  std::vector<std::optional<std::size_t>> matched_gt;
  // Indexed by anchor; empty tensor unless the anchor is positive.
  std::vector<Tensor> regression_targets;

  std::size_t positive_count() const;
};

double box_iou(const Box& a, const Box& b);

// Mean per-frame box IoU. Throws DimensionError on length mismatch.
double tubelet_iou(const Tubelet& a, const Tubelet& b);

// Anchors ordered (row, column, scale, ratio), row-major.
std::vector<Tubelet> generate_anchors(const AnchorGrid& grid);

// Per-frame (dx/w, dy/h, log w ratio, log h ratio), flattened to [4T].
Tensor encode_targets(const Tubelet& anchor, const Tubelet& gt);

struct ImageBounds {
  double width = 0;
  double height = 0;
};

// Inverse of encode_targets. With bounds set, boxes are clipped to the image
// and widened to at least one pixel.
Tubelet decode_boxes(const Tubelet& anchor, const Tensor& deltas,
                     std::optional<ImageBounds> bounds = std::nullopt);

/// Positive when mean IoU with any ground truth exceeds 0.5, or when the
/// anchor is the best match for some ground truth. Every ground truth claims
/// its own best anchor (lowest index on ties, skipping anchors already
/// claimed by an earlier ground truth), so each ground truth is matched by
/// at least one positive whenever anchors outnumber ground truths.
AnchorAssignment assign_labels(const std::vector<Tubelet>& anchors,
                               const std::vector<Tubelet>& gts);

// Greedy suppression in descending actionness order (ties keep the lower
// input index). A candidate is dropped when its IoU with a survivor is
// strictly greater than the threshold.
std::vector<Tubelet> nms_tubelets(const std::vector<Tubelet>& tubelets, double iou_threshold,
                                  std::size_t keep_top);
// Same, returning indices into the input.
std::vector<std::size_t> nms_indices(const std::vector<Tubelet>& tubelets, double iou_threshold,
                                     std::size_t keep_top);

}  // namespace lstr
