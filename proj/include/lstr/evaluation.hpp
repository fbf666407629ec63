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

// Frame-level and video-level mean average precision. A detection is a true
// positive when it carries the ground truth's label and its overlap with a
// still-unmatched ground truth is strictly greater than the threshold.
// Precision/recall curves use all-point interpolation.

#include <map>
#include <string>
#include <vector>

#include "lstr/geometry.hpp"
#include "lstr/tensor.hpp"

namespace lstr {

enum class EvalMode { kFrame, kVideo };

struct EvalConfig {
  double iou_threshold = 0.5;
  EvalMode mode = EvalMode::kVideo;
};

struct FrameDetection {
  std::string video;
  int frame = 0;
  int label = 0;
  double score = 0.0;
  Box box;
};

// A spatio-temporal tube: one box per covered frame.
struct VideoTube {
  std::string video;
  int label = 0;
  double score = 0.0;
  std::map<int, Box> boxes;
};

struct ApResult {
  std::vector<double> ap;        // per class; NaN when the class has no ground truth
  std::vector<std::size_t> gt_count;
  double mean = 0.0;             // over classes with at least one ground truth
};

// Ranked detections with true/false-positive flags -> all-point interpolated AP.
double average_precision(const std::vector<std::pair<double, bool>>& scored, std::size_t num_gt);

// Mean per-frame IoU over the union of covered frames; frames covered by one
// tube only count as zero.
double spatio_temporal_iou(const VideoTube& a, const VideoTube& b);

ApResult video_map(const std::vector<VideoTube>& detections, const std::vector<VideoTube>& gts,
                   std::size_t num_classes, const EvalConfig& cfg);

ApResult frame_map(const std::vector<FrameDetection>& detections, const std::vector<FrameDetection>& gts,
                   std::size_t num_classes, const EvalConfig& cfg);

// Elementwise mean of two score matrices.
Tensor late_fuse(const Tensor& scores_a, const Tensor& scores_b);

}  // namespace lstr
