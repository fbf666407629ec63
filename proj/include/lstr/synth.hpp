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

// Deterministic synthetic action videos. Each video shows moving filled
// rectangles ("actors") over a noisy background plus one stationary context
// object per actor. An actor's label is encoded jointly: the context object
// carries the label's own color, while the actor's tint only identifies the
// label pair (label / 2), so the actor alone is ambiguous. The context object
// may be hidden for whole clip-length blocks of frames.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lstr/geometry.hpp"
#include "lstr/tensor.hpp"

namespace lstr {

struct SynthConfig {
  int num_videos = 20;
  int frames_per_video = 16;
  int image_size = 64;
  int num_classes = 3;
  int actors_min = 1;
  int actors_max = 1;
  std::uint64_t seed = 1;
  double velocity_max = 1.5;     // pixels per frame, per axis
  double size_min = 14.0;        // actor side length range, pixels
  double size_max = 24.0;
  double noise = 0.04;           // per-pixel Gaussian noise
  int context_size = 16;
  double context_visibility = 0.7;  // per block; at least one block visible
  int visibility_block = 8;
  double actor_cue = 0.35;       // tint blend toward the label-pair color
  double partial_presence = 0.0; // probability an actor enters mid-video
  // First actor's label cycles through the classes (offset by seed) so that
  // small splits stay class-balanced; further actors draw labels uniformly.
  bool balanced_labels = true;

  // Throws ConfigError.
  void validate(int clip_length) const;
};

struct ActorTrack {
  int label = 0;
  std::vector<std::optional<Box>> boxes;  // per frame; empty when absent
};

struct SyntheticVideo {
  std::string id;
  Tensor frames;  // F x H x W x 3, values in [0, 1]
  std::vector<ActorTrack> actors;

  std::size_t frame_count() const { return frames.dim(0); }
};

std::vector<SyntheticVideo> generate(const SynthConfig& cfg);
SyntheticVideo generate_video(const SynthConfig& cfg, int index);

struct Clip {
  std::string video_id;
  int clip_index = 0;
  int first_frame = 0;
  Tensor frames;                 // T x H x W x 3
  std::vector<Tubelet> gt;       // actors present in every frame of the clip
  std::vector<int> gt_labels;
};

// Clips of T frames every `stride` frames. Videos whose length does not fit
// are padded by repeating the last frame.
std::vector<Clip> split_clips(const SyntheticVideo& video, int clip_length, int stride);

}  // namespace lstr
