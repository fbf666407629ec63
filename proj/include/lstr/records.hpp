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

// Plain-text interchange for detections and ground truth, one record per
// line:
//
//   video_id clip_index frame_index class score x1 y1 x2 y2 [track_id]
//
// The trailing track id is optional; records sharing (video_id, class,
// track_id) form one video-level tube. Without it, records sharing
// (video_id, class, score) are grouped instead. Blank lines and lines
// starting with '#' are skipped.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lstr/evaluation.hpp"
#include "lstr/geometry.hpp"

namespace lstr {

struct DetectionRecord {
  std::string video_id;
  int clip_index = 0;
  int frame_index = 0;
  int label = 0;
  double score = 0.0;
  Box box;
  int track_id = -1;
};

// Throws FormatError with the offending line number.
std::vector<DetectionRecord> read_records(std::istream& in);
std::vector<DetectionRecord> read_records(const std::filesystem::path& path);
void write_records(std::ostream& out, const std::vector<DetectionRecord>& records);

std::vector<VideoTube> tubes_from_records(const std::vector<DetectionRecord>& records);
std::vector<FrameDetection> frames_from_records(const std::vector<DetectionRecord>& records);

// CSV with header "class,ap,gt_count", one row per class and a final "mean" row.
void write_ap_csv(std::ostream& out, const ApResult& result);

}  // namespace lstr
