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

#include "lstr/linking.hpp"

#include <limits>
#include <stdexcept>

namespace lstr {
namespace {

double member_score(const Tubelet& t, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= t.class_scores.size()) {
    throw std::out_of_range("link_tubelets: tubelet has no score for label " + std::to_string(label));
  }
  return t.class_scores[static_cast<std::size_t>(label)];
}

}  // namespace

double path_value(const std::vector<std::vector<Tubelet>>& per_clip, int label,
                  const std::vector<TrackMember>& members, double link_iou_weight) {
  double v = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Tubelet& t = per_clip[static_cast<std::size_t>(members[i].clip)][members[i].tubelet];
    v += member_score(t, label);
    if (i > 0) {
      const Tubelet& prev = per_clip[static_cast<std::size_t>(members[i - 1].clip)][members[i - 1].tubelet];
      v += link_iou_weight * tubelet_iou(prev, t);
    }
  }
  return v;
}

std::vector<VideoTrack> link_tubelets(const std::vector<std::vector<Tubelet>>& per_clip, int label,
                                      double link_iou_weight) {
  const std::size_t clips = per_clip.size();
  std::vector<std::vector<bool>> alive(clips);
  std::size_t remaining = 0;
  for (std::size_t c = 0; c < clips; ++c) {
    alive[c].assign(per_clip[c].size(), true);
    remaining += per_clip[c].size();
  }

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<VideoTrack> tracks;
  std::vector<std::vector<double>> value(clips);
  std::vector<std::vector<long>> parent(clips);
  while (remaining > 0) {
    double best = kNone;
    std::size_t best_clip = 0, best_idx = 0;
    for (std::size_t c = 0; c < clips; ++c) {
      value[c].assign(per_clip[c].size(), kNone);
      parent[c].assign(per_clip[c].size(), -1);
      for (std::size_t j = 0; j < per_clip[c].size(); ++j) {
        if (!alive[c][j]) continue;
        double extend = 0.0;
        if (c > 0) {
          for (std::size_t i = 0; i < per_clip[c - 1].size(); ++i) {
            if (!alive[c - 1][i]) continue;
            const double cand = value[c - 1][i] + link_iou_weight * tubelet_iou(per_clip[c - 1][i], per_clip[c][j]);
            if (cand > extend) {
              extend = cand;
              parent[c][j] = static_cast<long>(i);
            }
          }
        }
        value[c][j] = member_score(per_clip[c][j], label) + extend;
        if (value[c][j] > best) {
          best = value[c][j];
          best_clip = c;
          best_idx = j;
        }
      }
    }
    VideoTrack track;
    track.label = label;
    long c = static_cast<long>(best_clip);
    long j = static_cast<long>(best_idx);
    while (j >= 0) {
      track.members.insert(track.members.begin(), TrackMember{static_cast<int>(c), static_cast<std::size_t>(j)});
      const long p = parent[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      --c;
      j = p;
    }
    double sum = 0.0;
    for (const TrackMember& m : track.members) {
      alive[static_cast<std::size_t>(m.clip)][m.tubelet] = false;
      sum += member_score(per_clip[static_cast<std::size_t>(m.clip)][m.tubelet], label);
    }
    remaining -= track.members.size();
    track.score = sum / static_cast<double>(track.members.size());
    tracks.push_back(std::move(track));
  }
  return tracks;
}

std::vector<VideoTrack> link_tubelets(const std::vector<std::vector<Tubelet>>& per_clip,
                                      double link_iou_weight) {
  std::size_t classes = 0;
  for (const auto& clip : per_clip) {
    for (const Tubelet& t : clip) classes = std::max(classes, t.class_scores.size());
  }
  std::vector<VideoTrack> out;
  for (std::size_t k = 0; k < classes; ++k) {
    auto tracks = link_tubelets(per_clip, static_cast<int>(k), link_iou_weight);
    out.insert(out.end(), tracks.begin(), tracks.end());
  }
  return out;
}

}  // namespace lstr
