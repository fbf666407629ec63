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

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner. Each one is written from the definition rather than
// from the library code it checks: box overlap counts unit cells on an
// integer grid, suppression and linking search exhaustively, and AP takes
// the envelope over every ranked cutoff.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "lstr/evaluation.hpp"
#include "lstr/geometry.hpp"
#include "lstr/linking.hpp"

namespace lstr::oracle {

// Integer corners in [0, extent]; width and height at least one.
inline Box random_grid_box(std::mt19937_64& rng, int extent) {
  std::uniform_int_distribution<int> pos(0, extent - 1);
  const int x1 = pos(rng), y1 = pos(rng);
  std::uniform_int_distribution<int> wx(1, extent - x1), wy(1, extent - y1);
  const int w = wx(rng), h = wy(rng);
  return Box{double(x1), double(y1), double(x1 + w), double(y1 + h)};
}

inline Tubelet random_grid_tubelet(std::mt19937_64& rng, int frames, int extent) {
  Tubelet t;
  for (int f = 0; f < frames; ++f) t.boxes.push_back(random_grid_box(rng, extent));
  return t;
}

// Counts covered unit cells. Valid for boxes with integer corners only.
inline double grid_box_iou(const Box& a, const Box& b) {
  const int lo_x = static_cast<int>(std::min(a.x1, b.x1)), hi_x = static_cast<int>(std::max(a.x2, b.x2));
  const int lo_y = static_cast<int>(std::min(a.y1, b.y1)), hi_y = static_cast<int>(std::max(a.y2, b.y2));
  long inter = 0, uni = 0;
  for (int y = lo_y; y < hi_y; ++y) {
    for (int x = lo_x; x < hi_x; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool in_a = cx > a.x1 && cx < a.x2 && cy > a.y1 && cy < a.y2;
      const bool in_b = cx > b.x1 && cx < b.x2 && cy > b.y1 && cy < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double grid_tubelet_iou(const Tubelet& a, const Tubelet& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.boxes.size(); ++t) s += grid_box_iou(a.boxes[t], b.boxes[t]);
  return s / static_cast<double>(a.boxes.size());
}

// Repeatedly takes the highest remaining score (lowest index on ties) and
// discards everything overlapping it by more than the threshold.
inline std::vector<std::size_t> nms(const std::vector<Tubelet>& ts, double threshold, std::size_t keep_top) {
  std::vector<bool> alive(ts.size(), true);
  std::vector<std::size_t> keep;
  while (keep.size() < keep_top) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (alive[i] && (!best || ts[i].actionness > ts[*best].actionness)) best = i;
    }
    if (!best) break;
    keep.push_back(*best);
    alive[*best] = false;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (alive[i] && grid_tubelet_iou(ts[i], ts[*best]) > threshold) alive[i] = false;
    }
  }
  return keep;
}

struct Assignment {
  std::vector<bool> positive;
  std::vector<std::optional<std::size_t>> matched;
};

// Positive above 0.5 mean IoU (matched to the first best gt); then each gt
// in order claims the best anchor not claimed by an earlier gt.
inline Assignment assign(const std::vector<Tubelet>& anchors, const std::vector<Tubelet>& gts) {
  Assignment out;
  out.positive.assign(anchors.size(), false);
  out.matched.assign(anchors.size(), std::nullopt);
  if (gts.empty()) return out;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = grid_tubelet_iou(anchors[a], gts[g]);
      if (v > best) {
        best = v;
        out.matched[a] = g;
      }
    }
    out.positive[a] = best > 0.5;
    if (!out.positive[a]) out.matched[a].reset();
  }
  std::vector<bool> claimed(anchors.size(), false);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    double best = -1.0;
    std::optional<std::size_t> pick;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (claimed[a]) continue;
      const double v = grid_tubelet_iou(anchors[a], gts[g]);
      if (v > best) {
        best = v;
        pick = a;
      }
    }
    if (!pick) break;
    claimed[*pick] = true;
    out.positive[*pick] = true;
    out.matched[*pick] = g;
  }
  return out;
}

struct Path {
  std::vector<TrackMember> members;
  double value = -std::numeric_limits<double>::infinity();
};

inline double path_value(const std::vector<std::vector<Tubelet>>& per_clip, int label,
                         const std::vector<TrackMember>& members, double w) {
  double v = 0.0;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Tubelet& t = per_clip[members[i].clip][members[i].tubelet];
    v += t.class_scores[label];
    if (i > 0) v += w * grid_tubelet_iou(per_clip[members[i - 1].clip][members[i - 1].tubelet], t);
  }
  return v;
}

// Every contiguous run of clips, every choice of one live tubelet per clip.
inline Path best_path(const std::vector<std::vector<Tubelet>>& per_clip,
                      const std::vector<std::vector<bool>>& alive, int label, double w) {
  Path best;
  const int clips = static_cast<int>(per_clip.size());
  std::vector<TrackMember> cur;
  std::function<void(int, int)> grow = [&](int c, int last) {
    if (!cur.empty()) {
      const double v = oracle::path_value(per_clip, label, cur, w);
      if (v > best.value) best = Path{cur, v};
    }
    if (c > last) return;
    for (std::size_t j = 0; j < per_clip[c].size(); ++j) {
      if (!alive[c][j]) continue;
      cur.push_back(TrackMember{c, j});
      grow(c + 1, last);
      cur.pop_back();
    }
  };
  for (int start = 0; start < clips; ++start) grow(start, clips - 1);
  return best;
}

// Extracts best paths until no tubelet is left.
inline std::vector<Path> link(const std::vector<std::vector<Tubelet>>& per_clip, int label, double w) {
  std::vector<std::vector<bool>> alive;
  std::size_t remaining = 0;
  for (const auto& c : per_clip) {
    alive.emplace_back(c.size(), true);
    remaining += c.size();
  }
  std::vector<Path> out;
  while (remaining > 0) {
    Path p = best_path(per_clip, alive, label, w);
    for (const TrackMember& m : p.members) alive[m.clip][m.tubelet] = false;
    remaining -= p.members.size();
    out.push_back(std::move(p));
  }
  return out;
}

// Area under the interpolated precision-recall curve: each recall step of
// 1/num_gt earns the best precision among cutoffs reaching that recall.
// Scores must be distinct.
inline double average_precision(std::vector<std::pair<double, bool>> scored, std::size_t num_gt) {
  std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<std::pair<double, double>> pr;  // (precision, recall) per cutoff
  for (std::size_t cut = 1; cut <= scored.size(); ++cut) {
    std::size_t tp = 0;
    for (std::size_t i = 0; i < cut; ++i) tp += scored[i].second;
    pr.emplace_back(double(tp) / double(cut), double(tp) / double(num_gt));
  }
  double ap = 0.0;
  for (std::size_t k = 1; k <= num_gt; ++k) {
    const double r = double(k) / double(num_gt);
    double p = 0.0;
    for (auto [prec, rec] : pr) {
      if (rec >= r - 1e-12) p = std::max(p, prec);
    }
    ap += p / double(num_gt);
  }
  return ap;
}

// Frame-level AP of one class: detections in score order each take the
// best-overlapping unused ground truth of the same video and frame.
inline double frame_ap(std::vector<FrameDetection> dets, const std::vector<FrameDetection>& gts, int label,
                       double thr) {
  std::size_t num_gt = 0;
  for (const auto& g : gts) num_gt += g.label == label;
  std::stable_sort(dets.begin(), dets.end(), [](auto& a, auto& b) { return a.score > b.score; });
  std::vector<bool> used(gts.size(), false);
  std::vector<std::pair<double, bool>> flags;
  for (const auto& d : dets) {
    if (d.label != label) continue;
    double best = -1;
    std::size_t pick = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].label != label || gts[g].video != d.video || gts[g].frame != d.frame) continue;
      const double o = grid_box_iou(d.box, gts[g].box);
      if (o > best) {
        best = o;
        pick = g;
      }
    }
    const bool tp = best > thr;
    if (tp) used[pick] = true;
    flags.emplace_back(d.score, tp);
  }
  return num_gt ? average_precision(flags, num_gt) : std::nan("");
}

}  // namespace lstr::oracle
