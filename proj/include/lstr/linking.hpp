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

#include <cstddef>
#include <vector>

#include "lstr/geometry.hpp"

namespace lstr {

struct TrackMember {
  int clip = 0;
  std::size_t tubelet = 0;
  bool operator==(const TrackMember&) const = default;
};

// Tubelets from consecutive clips assembled into one video-level track.
struct VideoTrack {
  std::vector<TrackMember> members;  // consecutive clips, temporal order
  int label = 0;
  double score = 0.0;                // mean member score for `label`
};

// Sum of member scores for `label` plus link_iou_weight times the overlap of
// each adjacent pair.
double path_value(const std::vector<std::vector<Tubelet>>& per_clip, int label,
                  const std::vector<TrackMember>& members, double link_iou_weight);

/// Links class-scored tubelets into tracks for one label by dynamic
/// programming over clips: the best-valued contiguous path is extracted, its
/// members are removed, and the search repeats until every tubelet belongs
/// to a track.
std::vector<VideoTrack> link_tubelets(const std::vector<std::vector<Tubelet>>& per_clip, int label,
                                      double link_iou_weight);

// All labels present in the tubelets' class_scores.
std::vector<VideoTrack> link_tubelets(const std::vector<std::vector<Tubelet>>& per_clip,
                                      double link_iou_weight);

}  // namespace lstr
